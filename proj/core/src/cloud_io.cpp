#include "pcmae/cloud_io.hpp"

#include "binary_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>

namespace pcmae::data {

namespace {

constexpr std::string_view kMagic = "PCXY";

std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open cloud file '" + path.string() + "'");
    return std::string(std::istreambuf_iterator<char>(in), {});
}

void dump(const std::filesystem::path& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write cloud file '" + path.string() + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

}  // namespace

CloudFormat format_for_path(const std::filesystem::path& path) {
    const auto ext = path.extension().string();
    return (ext == ".pcxy" || ext == ".bin") ? CloudFormat::binary : CloudFormat::text;
}

geometry::PointCloud parse_text_cloud(std::string_view text) {
    geometry::PointCloud cloud;
    std::size_t line_no = 0;
    while (!text.empty()) {
        ++line_no;
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);

        geometry::Vec3 p{};
        std::size_t count = 0;
        std::size_t i = 0;
        auto skip_ws = [&] {
            while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r' || line[i] == ','))
                ++i;
        };
        skip_ws();
        while (i < line.size()) {
            double v = 0;
            const char* begin = line.data() + i;
            const char* stop = line.data() + line.size();
            if (*begin == '+') ++begin;
            const auto res = std::from_chars(begin, stop, v);
            if (res.ec != std::errc{})
                throw CloudParseError("line " + std::to_string(line_no) + ": cannot parse number near '" +
                                      std::string(line.substr(i, 16)) + "'");
            if (count < 3) p[count] = v;
            ++count;
            i = static_cast<std::size_t>(res.ptr - line.data());
            if (i < line.size() && !(line[i] == ' ' || line[i] == '\t' || line[i] == '\r' || line[i] == ','))
                throw CloudParseError("line " + std::to_string(line_no) + ": unexpected character '" +
                                      std::string(1, line[i]) + "'");
            skip_ws();
        }
        if (count == 0) continue;
        if (count != 3)
            throw CloudParseError("line " + std::to_string(line_no) + ": expected 3 coordinates, got " +
                                  std::to_string(count));
        if (!std::isfinite(p[0]) || !std::isfinite(p[1]) || !std::isfinite(p[2]))
            throw CloudParseError("line " + std::to_string(line_no) + ": non-finite coordinate");
        cloud.points.push_back(p);
    }
    return cloud;
}

geometry::PointCloud parse_binary_cloud(std::string_view bytes) {
    try {
        detail::Reader r(bytes);
        if (r.take(4, "magic") != kMagic) throw CloudParseError("byte offset 0: missing PCXY magic");
        const std::uint32_t n = r.u32("point count");
        if (r.remaining() / 12 < n)
            throw CloudParseError("byte offset " + std::to_string(r.offset()) + ": truncated, header declares " +
                                  std::to_string(n) + " points but only " + std::to_string(r.remaining() / 12) +
                                  " are present");
        geometry::PointCloud cloud;
        cloud.points.reserve(n);
        for (std::uint32_t i = 0; i < n; ++i) {
            const std::size_t at = r.offset();
            geometry::Vec3 p{r.f32("x"), r.f32("y"), r.f32("z")};
            if (!std::isfinite(p[0]) || !std::isfinite(p[1]) || !std::isfinite(p[2]))
                throw CloudParseError("byte offset " + std::to_string(at) + ": non-finite coordinate");
            cloud.points.push_back(p);
        }
        if (r.remaining() != 0)
            throw CloudParseError("byte offset " + std::to_string(r.offset()) + ": " +
                                  std::to_string(r.remaining()) + " trailing bytes");
        return cloud;
    } catch (const std::out_of_range& e) {
        throw CloudParseError(e.what());
    }
}

geometry::PointCloud read_cloud(const std::filesystem::path& path) {
    const auto bytes = slurp(path);
    try {
        if (bytes.size() >= 4 && std::string_view(bytes).substr(0, 4) == kMagic) return parse_binary_cloud(bytes);
        return parse_text_cloud(bytes);
    } catch (const CloudParseError& e) {
        throw CloudParseError(path.string() + ": " + e.what());
    }
}

void write_cloud(const geometry::PointCloud& cloud, const std::filesystem::path& path, CloudFormat format) {
    std::string out;
    if (format == CloudFormat::binary) {
        out.append(kMagic);
        detail::put_u32(out, static_cast<std::uint32_t>(cloud.size()));
        for (const auto& p : cloud.points)
            for (double c : p) detail::put_f32(out, static_cast<float>(c));
    } else {
        char buf[32];
        for (const auto& p : cloud.points) {
            for (std::size_t d = 0; d < 3; ++d) {
                const auto res = std::to_chars(buf, buf + sizeof buf, p[d]);
                out.append(buf, res.ptr);
                out.push_back(d == 2 ? '\n' : ' ');
            }
        }
    }
    dump(path, out);
}

void write_cloud(const geometry::PointCloud& cloud, const std::filesystem::path& path) {
    write_cloud(cloud, path, format_for_path(path));
}

}  // namespace pcmae::data
