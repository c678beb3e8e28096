#pragma once

// Minimal "key = value" text format with [section] headers and full-line '#' / ';'
// comments. Numbers are read and written with <charconv>, so parsing does not
// depend on the C locale.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace pcmae::ini {

struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

class Document {
public:
    static Document parse(std::string_view text);

    /// Sets or replaces a key, creating the section on first use. Order of
    /// first insertion is preserved in `to_text`.
    void set(const std::string& section, const std::string& key, std::string value);
    void set(const std::string& section, const std::string& key, double value);
    void set(const std::string& section, const std::string& key, std::uint64_t value);
    void set(const std::string& section, const std::string& key, bool value);

    std::optional<std::string> get(const std::string& section, const std::string& key) const;
    bool has_section(const std::string& section) const;

    /// Typed readers; return `fallback` when the key is absent and throw
    /// ParseError naming section.key when the value is malformed.
    std::string get_string(const std::string& section, const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& section, const std::string& key, double fallback) const;
    std::uint64_t get_uint(const std::string& section, const std::string& key, std::uint64_t fallback) const;
    bool get_bool(const std::string& section, const std::string& key, bool fallback) const;

    /// Throws ParseError if any key in `section` is not in `known`.
    void require_known_keys(const std::string& section, const std::vector<std::string>& known) const;
    /// Throws ParseError if any section is not in `known`.
    void require_known_sections(const std::vector<std::string>& known) const;

    std::string to_text() const;

private:
    struct Section {
        std::string name;
        std::vector<std::pair<std::string, std::string>> entries;
    };
    Section& section(const std::string& name);
    const Section* find(const std::string& name) const;
    std::vector<Section> sections_;
};

/// Shortest round-trip decimal form.
std::string format_double(double v);

}  // namespace pcmae::ini
