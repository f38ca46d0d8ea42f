#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mqt {

// Self-consistent multi-task scene: labels are derived from the same scene
// geometry, so every map agrees with the others by construction.
struct SyntheticScene {
    std::int64_t h = 0;
    std::int64_t w = 0;
    std::uint64_t seed = 0;
    std::vector<double> image;    // h*w*3, in [0,1]
    std::vector<double> seg;      // h*w, integer class ids
    std::vector<double> depth;    // h*w, in [kDepthMin, kDepthMax]
    std::vector<double> normals;  // h*w*3, unit vectors
    std::vector<double> edge;     // h*w, binary seg-boundary map (4-connectivity)
    std::vector<double> sal;      // h*w, binary foreground map
};

constexpr double kDepthMin = 0.5;
constexpr double kDepthMax = 3.0;

// normals = normalize(-ddepth/dx, -ddepth/dy, 1), central differences in the
// interior and one-sided at borders.
std::vector<double> normals_from_depth(const std::vector<double>& depth, std::int64_t h,
                                       std::int64_t w);

// 4-connected class-boundary map of a label image.
std::vector<double> boundary_of(const std::vector<double>& seg, std::int64_t h, std::int64_t w);

// Pure function of its arguments: identical calls give bit-identical scenes.
SyntheticScene generate_scene(std::uint64_t seed, std::int64_t h, std::int64_t w,
                              std::int64_t num_classes, std::int64_t min_primitives,
                              std::int64_t max_primitives);

// Deterministic augmentation core: bilinear for image/depth, nearest for
// categorical maps, normals re-normalized, depth divided by the scale factor.
SyntheticScene augment_with(const SyntheticScene& scene, double scale_factor, std::int64_t crop_y,
                            std::int64_t crop_x, std::int64_t out_h, std::int64_t out_w);
// Random scale in [0.5, 2.0] and random crop.
SyntheticScene augment(const SyntheticScene& scene, std::uint64_t seed, std::int64_t out_h,
                       std::int64_t out_w);

struct Dataset {
    std::vector<SyntheticScene> scenes;
    std::int64_t num_classes = 0;
};

// Directory layout: manifest.json plus one tensor container per scene.
void save_dataset(const std::string& dir, const Dataset& dataset);
Dataset load_dataset(const std::string& dir);

}  // namespace mqt
