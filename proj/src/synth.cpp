#include "mqt/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

#include "mqt/errors.hpp"
#include "mqt/serialize.hpp"

namespace mqt {

namespace {

// Platform-independent uniform draw, one engine step per call.
double urand(std::mt19937_64& rng, double lo, double hi) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    return lo + (hi - lo) * u;
}

std::int64_t irand(std::mt19937_64& rng, std::int64_t lo, std::int64_t hi) {
    return lo + static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(hi - lo + 1));
}

void class_color(std::int64_t cls, double* rgb) {
    rgb[0] = static_cast<double>((cls * 73 + 41) % 256) / 255.0;
    rgb[1] = static_cast<double>((cls * 151 + 97) % 256) / 255.0;
    rgb[2] = static_cast<double>((cls * 211 + 13) % 256) / 255.0;
}

// align-corners-false bilinear on a raw channel-interleaved array
std::vector<double> resample_bilinear(const std::vector<double>& src, std::int64_t h,
                                      std::int64_t w, std::int64_t c, std::int64_t oh,
                                      std::int64_t ow) {
    std::vector<double> out(static_cast<std::size_t>(oh * ow * c));
    for (std::int64_t oy = 0; oy < oh; ++oy) {
        const double sy = (static_cast<double>(oy) + 0.5) * static_cast<double>(h) / static_cast<double>(oh) - 0.5;
        const double fy = std::floor(sy);
        const double wy1 = sy - fy;
        const std::int64_t y0 = std::clamp<std::int64_t>(static_cast<std::int64_t>(fy), 0, h - 1);
        const std::int64_t y1 = std::clamp<std::int64_t>(static_cast<std::int64_t>(fy) + 1, 0, h - 1);
        for (std::int64_t ox = 0; ox < ow; ++ox) {
            const double sx = (static_cast<double>(ox) + 0.5) * static_cast<double>(w) / static_cast<double>(ow) - 0.5;
            const double fx = std::floor(sx);
            const double wx1 = sx - fx;
            const std::int64_t x0 = std::clamp<std::int64_t>(static_cast<std::int64_t>(fx), 0, w - 1);
            const std::int64_t x1 = std::clamp<std::int64_t>(static_cast<std::int64_t>(fx) + 1, 0, w - 1);
            for (std::int64_t ch = 0; ch < c; ++ch) {
                out[static_cast<std::size_t>((oy * ow + ox) * c + ch)] =
                    (1.0 - wy1) * ((1.0 - wx1) * src[static_cast<std::size_t>((y0 * w + x0) * c + ch)] +
                                   wx1 * src[static_cast<std::size_t>((y0 * w + x1) * c + ch)]) +
                    wy1 * ((1.0 - wx1) * src[static_cast<std::size_t>((y1 * w + x0) * c + ch)] +
                           wx1 * src[static_cast<std::size_t>((y1 * w + x1) * c + ch)]);
            }
        }
    }
    return out;
}

std::vector<double> resample_nearest(const std::vector<double>& src, std::int64_t h,
                                     std::int64_t w, std::int64_t oh, std::int64_t ow) {
    std::vector<double> out(static_cast<std::size_t>(oh * ow));
    for (std::int64_t oy = 0; oy < oh; ++oy) {
        const auto sy = std::clamp<std::int64_t>(
            static_cast<std::int64_t>(std::floor((static_cast<double>(oy) + 0.5) *
                                                 static_cast<double>(h) / static_cast<double>(oh))),
            0, h - 1);
        for (std::int64_t ox = 0; ox < ow; ++ox) {
            const auto sx = std::clamp<std::int64_t>(
                static_cast<std::int64_t>(std::floor((static_cast<double>(ox) + 0.5) *
                                                     static_cast<double>(w) / static_cast<double>(ow))),
                0, w - 1);
            out[static_cast<std::size_t>(oy * ow + ox)] = src[static_cast<std::size_t>(sy * w + sx)];
        }
    }
    return out;
}

}  // namespace

std::vector<double> normals_from_depth(const std::vector<double>& depth, std::int64_t h,
                                       std::int64_t w) {
    std::vector<double> out(static_cast<std::size_t>(h * w * 3));
    for (std::int64_t y = 0; y < h; ++y) {
        for (std::int64_t x = 0; x < w; ++x) {
            const std::int64_t xl = std::max<std::int64_t>(x - 1, 0), xr = std::min<std::int64_t>(x + 1, w - 1);
            const std::int64_t yu = std::max<std::int64_t>(y - 1, 0), yd = std::min<std::int64_t>(y + 1, h - 1);
            const double dzdx = (depth[static_cast<std::size_t>(y * w + xr)] -
                                 depth[static_cast<std::size_t>(y * w + xl)]) /
                                static_cast<double>(xr - xl);
            const double dzdy = (depth[static_cast<std::size_t>(yd * w + x)] -
                                 depth[static_cast<std::size_t>(yu * w + x)]) /
                                static_cast<double>(yd - yu);
            const double norm = std::sqrt(dzdx * dzdx + dzdy * dzdy + 1.0);
            const auto o = static_cast<std::size_t>((y * w + x) * 3);
            out[o + 0] = -dzdx / norm;
            out[o + 1] = -dzdy / norm;
            out[o + 2] = 1.0 / norm;
        }
    }
    return out;
}

std::vector<double> boundary_of(const std::vector<double>& seg, std::int64_t h, std::int64_t w) {
    std::vector<double> out(static_cast<std::size_t>(h * w), 0.0);
    for (std::int64_t y = 0; y < h; ++y) {
        for (std::int64_t x = 0; x < w; ++x) {
            const double c = seg[static_cast<std::size_t>(y * w + x)];
            const bool diff = (x > 0 && seg[static_cast<std::size_t>(y * w + x - 1)] != c) ||
                              (x + 1 < w && seg[static_cast<std::size_t>(y * w + x + 1)] != c) ||
                              (y > 0 && seg[static_cast<std::size_t>((y - 1) * w + x)] != c) ||
                              (y + 1 < h && seg[static_cast<std::size_t>((y + 1) * w + x)] != c);
            if (diff) out[static_cast<std::size_t>(y * w + x)] = 1.0;
        }
    }
    return out;
}

SyntheticScene generate_scene(std::uint64_t seed, std::int64_t h, std::int64_t w,
                              std::int64_t num_classes, std::int64_t min_primitives,
                              std::int64_t max_primitives) {
    if (h < 16 || w < 16) throw ContractError("generate_scene: size must be at least 16x16");
    if (num_classes < 2) throw ContractError("generate_scene: need at least 2 classes");
    if (min_primitives < 0 || max_primitives < min_primitives)
        throw ContractError("generate_scene: bad primitive count range");

    std::mt19937_64 rng(seed);
    SyntheticScene sc;
    sc.h = h;
    sc.w = w;
    sc.seed = seed;
    const std::size_t pixels = static_cast<std::size_t>(h * w);
    sc.seg.assign(pixels, 0.0);
    sc.depth.assign(pixels, 2.8);  // flat background plane
    sc.sal.assign(pixels, 0.0);

    const std::int64_t count = irand(rng, min_primitives, max_primitives);
    for (std::int64_t i = 0; i < count; ++i) {
        const bool ellipse = irand(rng, 0, 1) == 1;
        const std::int64_t cls = irand(rng, 1, num_classes - 1);
        const double cx = urand(rng, 0.15, 0.85) * static_cast<double>(w);
        const double cy = urand(rng, 0.15, 0.85) * static_cast<double>(h);
        const double rx = urand(rng, 0.08, 0.28) * static_cast<double>(w);
        const double ry = urand(rng, 0.08, 0.28) * static_cast<double>(h);
        const double d0 = urand(rng, 0.8, 2.5);
        const double slack = std::min(d0 - kDepthMin, kDepthMax - d0);
        const double gmax = slack / (rx + ry + 1.0);
        const double gx = urand(rng, -gmax, gmax);
        const double gy = urand(rng, -gmax, gmax);
        for (std::int64_t y = 0; y < h; ++y) {
            for (std::int64_t x = 0; x < w; ++x) {
                const double dx = (static_cast<double>(x) - cx) / rx;
                const double dy = (static_cast<double>(y) - cy) / ry;
                const bool inside = ellipse ? (dx * dx + dy * dy <= 1.0)
                                            : (std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0);
                if (!inside) continue;
                const auto idx = static_cast<std::size_t>(y * w + x);
                sc.seg[idx] = static_cast<double>(cls);
                sc.depth[idx] = d0 + gx * (static_cast<double>(x) - cx) + gy * (static_cast<double>(y) - cy);
                sc.sal[idx] = 1.0;
            }
        }
    }

    sc.normals = normals_from_depth(sc.depth, h, w);
    sc.edge = boundary_of(sc.seg, h, w);
    sc.image.resize(pixels * 3);
    for (std::size_t i = 0; i < pixels; ++i) {
        double rgb[3];
        class_color(static_cast<std::int64_t>(sc.seg[i]), rgb);
        const double shade = 0.35 + 0.65 * (kDepthMax - sc.depth[i]) / (kDepthMax - kDepthMin);
        for (int ch = 0; ch < 3; ++ch)
            sc.image[3 * i + static_cast<std::size_t>(ch)] = std::clamp(rgb[ch] * shade, 0.0, 1.0);
    }
    return sc;
}

SyntheticScene augment_with(const SyntheticScene& scene, double scale_factor, std::int64_t crop_y,
                            std::int64_t crop_x, std::int64_t out_h, std::int64_t out_w) {
    if (scale_factor <= 0.0) throw ContractError("augment: scale factor must be positive");
    const auto sh = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::llround(
                                                  static_cast<double>(scene.h) * scale_factor)));
    const auto sw = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::llround(
                                                  static_cast<double>(scene.w) * scale_factor)));
    if (sh < out_h || sw < out_w)
        throw ContractError("augment: crop " + std::to_string(out_h) + "x" + std::to_string(out_w) +
                            " larger than scaled image " + std::to_string(sh) + "x" +
                            std::to_string(sw));
    if (crop_y < 0 || crop_x < 0 || crop_y + out_h > sh || crop_x + out_w > sw)
        throw ContractError("augment: crop window out of bounds");

    auto scaled_image = resample_bilinear(scene.image, scene.h, scene.w, 3, sh, sw);
    auto scaled_depth = resample_bilinear(scene.depth, scene.h, scene.w, 1, sh, sw);
    auto scaled_normals = resample_bilinear(scene.normals, scene.h, scene.w, 3, sh, sw);
    auto scaled_seg = resample_nearest(scene.seg, scene.h, scene.w, sh, sw);
    auto scaled_edge = resample_nearest(scene.edge, scene.h, scene.w, sh, sw);
    auto scaled_sal = resample_nearest(scene.sal, scene.h, scene.w, sh, sw);

    SyntheticScene out;
    out.h = out_h;
    out.w = out_w;
    out.seed = scene.seed;
    const std::size_t pixels = static_cast<std::size_t>(out_h * out_w);
    out.image.resize(pixels * 3);
    out.depth.resize(pixels);
    out.normals.resize(pixels * 3);
    out.seg.resize(pixels);
    out.edge.resize(pixels);
    out.sal.resize(pixels);
    for (std::int64_t y = 0; y < out_h; ++y) {
        for (std::int64_t x = 0; x < out_w; ++x) {
            const auto src = static_cast<std::size_t>((y + crop_y) * sw + (x + crop_x));
            const auto dst = static_cast<std::size_t>(y * out_w + x);
            for (int ch = 0; ch < 3; ++ch) out.image[3 * dst + static_cast<std::size_t>(ch)] = scaled_image[3 * src + static_cast<std::size_t>(ch)];
            // depth scales inversely with image magnification
            out.depth[dst] = scaled_depth[src] / scale_factor;
            double n[3];
            double norm = 0.0;
            for (int ch = 0; ch < 3; ++ch) {
                n[ch] = scaled_normals[3 * src + static_cast<std::size_t>(ch)];
                norm += n[ch] * n[ch];
            }
            norm = std::sqrt(norm);
            for (int ch = 0; ch < 3; ++ch)
                out.normals[3 * dst + static_cast<std::size_t>(ch)] = norm > 0.0 ? n[ch] / norm : (ch == 2 ? 1.0 : 0.0);
            out.seg[dst] = scaled_seg[src];
            out.edge[dst] = scaled_edge[src];
            out.sal[dst] = scaled_sal[src];
        }
    }
    return out;
}

SyntheticScene augment(const SyntheticScene& scene, std::uint64_t seed, std::int64_t out_h,
                       std::int64_t out_w) {
    std::mt19937_64 rng(seed);
    const double lo = std::max(0.5, std::max(static_cast<double>(out_h) / static_cast<double>(scene.h),
                                             static_cast<double>(out_w) / static_cast<double>(scene.w)));
    if (lo > 2.0)
        throw ContractError("augment: output size unreachable within the scale range");
    const double s = urand(rng, lo, 2.0);
    const auto sh = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::llround(static_cast<double>(scene.h) * s)));
    const auto sw = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::llround(static_cast<double>(scene.w) * s)));
    const auto cy = sh > out_h ? irand(rng, 0, sh - out_h) : 0;
    const auto cx = sw > out_w ? irand(rng, 0, sw - out_w) : 0;
    return augment_with(scene, s, cy, cx, out_h, out_w);
}

namespace {

std::map<std::string, Tensor> scene_to_tensors(const SyntheticScene& sc) {
    std::map<std::string, Tensor> m;
    m.emplace("image", Tensor::from_data({sc.h, sc.w, 3}, sc.image));
    m.emplace("seg", Tensor::from_data({sc.h, sc.w}, sc.seg));
    m.emplace("depth", Tensor::from_data({sc.h, sc.w}, sc.depth));
    m.emplace("normals", Tensor::from_data({sc.h, sc.w, 3}, sc.normals));
    m.emplace("edge", Tensor::from_data({sc.h, sc.w}, sc.edge));
    m.emplace("sal", Tensor::from_data({sc.h, sc.w}, sc.sal));
    return m;
}

std::string scene_file(std::size_t idx) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "scene_%05zu.mqt", idx);
    return buf;
}

}  // namespace

void save_dataset(const std::string& dir, const Dataset& dataset) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    nlohmann::json manifest;
    manifest["count"] = dataset.scenes.size();
    manifest["classes"] = dataset.num_classes;
    std::vector<std::uint64_t> seeds;
    std::vector<std::vector<std::int64_t>> shapes;
    for (const auto& sc : dataset.scenes) {
        seeds.push_back(sc.seed);
        shapes.push_back({sc.h, sc.w});
    }
    manifest["seeds"] = seeds;
    manifest["shapes"] = shapes;
    std::ofstream mf(fs::path(dir) / "manifest.json");
    if (!mf) throw FormatError("cannot write manifest in " + dir);
    mf << manifest.dump(2) << "\n";
    for (std::size_t i = 0; i < dataset.scenes.size(); ++i)
        save_container((fs::path(dir) / scene_file(i)).string(), scene_to_tensors(dataset.scenes[i]));
}

Dataset load_dataset(const std::string& dir) {
    namespace fs = std::filesystem;
    std::ifstream mf(fs::path(dir) / "manifest.json");
    if (!mf) throw FormatError("missing manifest.json in " + dir);
    nlohmann::json manifest;
    try {
        mf >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("bad manifest: " + std::string(e.what()));
    }
    Dataset ds;
    ds.num_classes = manifest.at("classes").get<std::int64_t>();
    const auto count = manifest.at("count").get<std::size_t>();
    const auto seeds = manifest.at("seeds").get<std::vector<std::uint64_t>>();
    if (seeds.size() != count) throw FormatError("manifest seed list does not match count");
    for (std::size_t i = 0; i < count; ++i) {
        auto tensors = load_container((fs::path(dir) / scene_file(i)).string());
        auto need = [&](const char* name) -> Tensor& {
            auto it = tensors.find(name);
            if (it == tensors.end())
                throw FormatError("scene " + std::to_string(i) + " missing tensor '" + name + "'");
            return it->second;
        };
        SyntheticScene sc;
        Tensor& img = need("image");
        if (img.rank() != 3 || img.dim(2) != 3) throw FormatError("scene image has bad shape");
        sc.h = img.dim(0);
        sc.w = img.dim(1);
        sc.seed = seeds[i];
        sc.image = img.data();
        sc.seg = need("seg").data();
        sc.depth = need("depth").data();
        sc.normals = need("normals").data();
        sc.edge = need("edge").data();
        sc.sal = need("sal").data();
        const std::size_t pixels = static_cast<std::size_t>(sc.h * sc.w);
        if (sc.seg.size() != pixels || sc.depth.size() != pixels || sc.edge.size() != pixels ||
            sc.sal.size() != pixels || sc.normals.size() != pixels * 3)
            throw FormatError("scene " + std::to_string(i) + " has inconsistent map sizes");
        ds.scenes.push_back(std::move(sc));
    }
    return ds;
}

}  // namespace mqt
