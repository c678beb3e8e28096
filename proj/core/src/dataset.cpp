#include "pcmae/dataset.hpp"

#include "pcmae/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace pcmae::data {

namespace {

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != ' ' && c != '\t') {
            cur.push_back(c);
        }
    }
    if (!cur.empty() || !out.empty()) out.push_back(cur);
    return out;
}

}  // namespace

void DatasetManifest::validate() const {
    if (count_per_class < 1) throw std::invalid_argument("dataset manifest: count_per_class must be >= 1");
    if (points < 1) throw std::invalid_argument("dataset manifest: points must be >= 1");
    if (families.empty()) throw std::invalid_argument("dataset manifest: no families");
    if (!(jitter >= 0.0 && jitter <= 1.0)) throw std::invalid_argument("dataset manifest: jitter must lie in [0, 1]");
    for (std::size_t i = 0; i < families.size(); ++i)
        for (std::size_t j = i + 1; j < families.size(); ++j)
            if (families[i] == families[j])
                throw std::invalid_argument("dataset manifest: family '" + std::string(to_string(families[i])) +
                                            "' listed twice");
}

void DatasetManifest::write(ini::Document& doc, const std::string& section) const {
    doc.set(section, "split", split);
    doc.set(section, "count_per_class", static_cast<std::uint64_t>(count_per_class));
    doc.set(section, "seed", seed);
    doc.set(section, "points", static_cast<std::uint64_t>(points));
    doc.set(section, "jitter", jitter);
    std::string fams;
    for (std::size_t i = 0; i < families.size(); ++i) {
        if (i) fams += ", ";
        fams += to_string(families[i]);
    }
    doc.set(section, "families", fams);
}

DatasetManifest DatasetManifest::read(const ini::Document& doc, const std::string& section) {
    doc.require_known_keys(section, {"split", "count_per_class", "seed", "points", "jitter", "families"});
    DatasetManifest m;
    m.split = doc.get_string(section, "split", m.split);
    m.count_per_class = doc.get_uint(section, "count_per_class", m.count_per_class);
    m.seed = doc.get_uint(section, "seed", m.seed);
    m.points = doc.get_uint(section, "points", m.points);
    m.jitter = doc.get_double(section, "jitter", m.jitter);
    if (const auto fams = doc.get(section, "families")) {
        m.families.clear();
        for (const auto& name : split_list(*fams)) m.families.push_back(parse_family(name));
    }
    m.validate();
    return m;
}

std::uint64_t cloud_seed(const DatasetManifest& manifest, std::size_t label, std::size_t index) {
    return derive_seed(manifest.seed, fnv1a(manifest.split), label, index);
}

std::vector<geometry::PointCloud> make_dataset(const DatasetManifest& manifest) {
    manifest.validate();
    std::vector<geometry::PointCloud> out;
    out.reserve(manifest.size());
    for (std::size_t label = 0; label < manifest.families.size(); ++label) {
        const ShapeSpec spec{manifest.families[label], manifest.points, manifest.jitter};
        for (std::size_t i = 0; i < manifest.count_per_class; ++i) {
            auto cloud = generate_shape(spec, cloud_seed(manifest, label, i));
            cloud.label = static_cast<int>(label);
            out.push_back(std::move(cloud));
        }
    }
    return out;
}

DatasetManifest with_split(DatasetManifest manifest, std::string split, std::size_t count_per_class) {
    manifest.split = std::move(split);
    manifest.count_per_class = count_per_class;
    return manifest;
}

ScaleTranslate draw_scale_translate(std::uint64_t seed) {
    Rng rng(seed);
    ScaleTranslate st;
    for (std::size_t d = 0; d < 3; ++d) {
        st.scale[d] = rng.uniform(2.0 / 3.0, 3.0 / 2.0);
        st.shift[d] = rng.uniform(-0.2, 0.2);
    }
    return st;
}

geometry::PointCloud apply_scale_translate(geometry::PointCloud cloud, const ScaleTranslate& st) {
    for (auto& p : cloud.points)
        for (std::size_t d = 0; d < 3; ++d) p[d] = p[d] * st.scale[d] + st.shift[d];
    return cloud;
}

geometry::PointCloud augment_scale_translate(const geometry::PointCloud& cloud, std::uint64_t seed) {
    return apply_scale_translate(cloud, draw_scale_translate(seed));
}

double draw_rotation_angle(std::uint64_t seed) {
    Rng rng(seed);
    return 2.0 * std::numbers::pi * rng.uniform();
}

geometry::PointCloud rotate_vertical(geometry::PointCloud cloud, double angle) {
    const double c = std::cos(angle), s = std::sin(angle);
    for (auto& p : cloud.points) {
        const double x = p[0], z = p[2];
        p[0] = c * x + s * z;
        p[2] = -s * x + c * z;
    }
    return cloud;
}

geometry::PointCloud augment_rotate(const geometry::PointCloud& cloud, std::uint64_t seed) {
    return rotate_vertical(cloud, draw_rotation_angle(seed));
}

}  // namespace pcmae::data
