#include "pcmae/ini.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>

namespace pcmae::ini {

namespace {

std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::string qualified(const std::string& section, const std::string& key) {
    return section.empty() ? key : section + "." + key;
}

}  // namespace

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

Document Document::parse(std::string_view text) {
    Document doc;
    std::string current;
    std::size_t line_no = 0;
    while (!text.empty()) {
        ++line_no;
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        line = trim(line);
        if (line.empty() || line.front() == '#' || line.front() == ';') continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ParseError("line " + std::to_string(line_no) + ": unterminated section header");
            current = std::string(trim(line.substr(1, line.size() - 2)));
            if (current.empty()) throw ParseError("line " + std::to_string(line_no) + ": empty section name");
            doc.section(current);
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos)
            throw ParseError("line " + std::to_string(line_no) + ": expected 'key = value', got '" +
                             std::string(line) + "'");
        const auto key = std::string(trim(line.substr(0, eq)));
        if (key.empty()) throw ParseError("line " + std::to_string(line_no) + ": missing key");
        auto& sec = doc.section(current);
        if (std::any_of(sec.entries.begin(), sec.entries.end(), [&](const auto& e) { return e.first == key; }))
            throw ParseError("line " + std::to_string(line_no) + ": duplicate key '" + qualified(current, key) + "'");
        sec.entries.emplace_back(key, std::string(trim(line.substr(eq + 1))));
    }
    return doc;
}

Document::Section& Document::section(const std::string& name) {
    for (auto& s : sections_)
        if (s.name == name) return s;
    sections_.push_back(Section{name, {}});
    return sections_.back();
}

const Document::Section* Document::find(const std::string& name) const {
    for (const auto& s : sections_)
        if (s.name == name) return &s;
    return nullptr;
}

void Document::set(const std::string& sec, const std::string& key, std::string value) {
    auto& s = section(sec);
    for (auto& e : s.entries)
        if (e.first == key) {
            e.second = std::move(value);
            return;
        }
    s.entries.emplace_back(key, std::move(value));
}

void Document::set(const std::string& sec, const std::string& key, double value) {
    set(sec, key, format_double(value));
}

void Document::set(const std::string& sec, const std::string& key, std::uint64_t value) {
    set(sec, key, std::to_string(value));
}

void Document::set(const std::string& sec, const std::string& key, bool value) {
    set(sec, key, std::string(value ? "true" : "false"));
}

std::optional<std::string> Document::get(const std::string& sec, const std::string& key) const {
    if (const auto* s = find(sec))
        for (const auto& e : s->entries)
            if (e.first == key) return e.second;
    return std::nullopt;
}

bool Document::has_section(const std::string& sec) const { return find(sec) != nullptr; }

std::string Document::get_string(const std::string& sec, const std::string& key, const std::string& fallback) const {
    return get(sec, key).value_or(fallback);
}

double Document::get_double(const std::string& sec, const std::string& key, double fallback) const {
    const auto v = get(sec, key);
    if (!v) return fallback;
    double out = 0;
    const auto* end = v->data() + v->size();
    const auto res = std::from_chars(v->data(), end, out);
    if (res.ec != std::errc{} || res.ptr != end)
        throw ParseError("'" + qualified(sec, key) + "': expected a number, got '" + *v + "'");
    return out;
}

std::uint64_t Document::get_uint(const std::string& sec, const std::string& key, std::uint64_t fallback) const {
    const auto v = get(sec, key);
    if (!v) return fallback;
    std::uint64_t out = 0;
    const auto* end = v->data() + v->size();
    const auto res = std::from_chars(v->data(), end, out);
    if (res.ec != std::errc{} || res.ptr != end)
        throw ParseError("'" + qualified(sec, key) + "': expected a non-negative integer, got '" + *v + "'");
    return out;
}

bool Document::get_bool(const std::string& sec, const std::string& key, bool fallback) const {
    const auto v = get(sec, key);
    if (!v) return fallback;
    if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") return true;
    if (*v == "false" || *v == "0" || *v == "no" || *v == "off") return false;
    throw ParseError("'" + qualified(sec, key) + "': expected true/false, got '" + *v + "'");
}

void Document::require_known_keys(const std::string& sec, const std::vector<std::string>& known) const {
    const auto* s = find(sec);
    if (!s) return;
    for (const auto& e : s->entries)
        if (std::find(known.begin(), known.end(), e.first) == known.end())
            throw ParseError("unknown key '" + qualified(sec, e.first) + "'");
}

void Document::require_known_sections(const std::vector<std::string>& known) const {
    for (const auto& s : sections_)
        if (std::find(known.begin(), known.end(), s.name) == known.end())
            throw ParseError("unknown section [" + s.name + "]");
}

std::string Document::to_text() const {
    std::ostringstream os;
    bool first = true;
    for (const auto& s : sections_) {
        if (!first) os << '\n';
        first = false;
        if (!s.name.empty()) os << '[' << s.name << "]\n";
        for (const auto& [k, v] : s.entries) os << k << " = " << v << '\n';
    }
    return os.str();
}

}  // namespace pcmae::ini
