#pragma once

#include "pcmae/geometry.hpp"
#include "pcmae/ini.hpp"
#include "pcmae/shapes.hpp"

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace pcmae::data {

/// Everything needed to regenerate a split bit-for-bit.
struct DatasetManifest {
    std::string split = "train";
    std::size_t count_per_class = 32;
    std::uint64_t seed = 0;
    std::size_t points = 1024;
    double jitter = 1.0;  // see ShapeSpec::jitter
    std::vector<Family> families{kAllFamilies.begin(), kAllFamilies.end()};

    std::size_t num_classes() const noexcept { return families.size(); }
    std::size_t size() const noexcept { return families.size() * count_per_class; }

    /// Throws std::invalid_argument on zero counts or duplicate families.
    void validate() const;

    /// Writes/reads the [data] section of a config document.
    void write(ini::Document& doc, const std::string& section = "data") const;
    static DatasetManifest read(const ini::Document& doc, const std::string& section = "data");
};

/// Seed of cloud `index` of class `label`. Different split names give
/// independent seed streams.
std::uint64_t cloud_seed(const DatasetManifest& manifest, std::size_t label, std::size_t index);

/// count_per_class clouds of every family, grouped by class, labeled with the
/// family's position in `manifest.families`. Every cloud is normalized.
std::vector<geometry::PointCloud> make_dataset(const DatasetManifest& manifest);

/// Copy of `manifest` with a different split name.
DatasetManifest with_split(DatasetManifest manifest, std::string split, std::size_t count_per_class);

struct ScaleTranslate {
    std::array<double, 3> scale{1, 1, 1};
    std::array<double, 3> shift{0, 0, 0};
};

/// Per-axis scale in [2/3, 3/2] and shift in [-0.2, 0.2].
ScaleTranslate draw_scale_translate(std::uint64_t seed);
geometry::PointCloud apply_scale_translate(geometry::PointCloud cloud, const ScaleTranslate& st);
geometry::PointCloud augment_scale_translate(const geometry::PointCloud& cloud, std::uint64_t seed);

/// Angle uniform in [0, 2 pi).
double draw_rotation_angle(std::uint64_t seed);
/// Rotation about the vertical (y) axis: (x, z) -> (x cos a + z sin a, -x sin a + z cos a).
geometry::PointCloud rotate_vertical(geometry::PointCloud cloud, double angle);
geometry::PointCloud augment_rotate(const geometry::PointCloud& cloud, std::uint64_t seed);

}  // namespace pcmae::data
