#pragma once

#include <array>
#include <filesystem>

#include "phenoseq/model.hpp"

namespace phenoseq {

struct GradCamResult {
    std::size_t target_class = 0;
    Tensor weights;      ///< alpha per feature map, [K]
    Tensor activations;  ///< last conv layer maps A, [K x u x v]
    Tensor map;          ///< ReLU(sum_k alpha_k A^k), [u x v]
    Tensor overlay;      ///< input blended with the colorized, upsampled map
};

/// Spatial mean of the score gradient for each map: [K x u x v] -> [K].
Tensor gradcam_weights(const Tensor& gradients);
/// ReLU of the weighted sum of maps.
Tensor gradcam_map(const Tensor& activations, const Tensor& weights);

/// Alpha for the pre-softmax score of `target_class`, with the last conv maps set to `activation`.
Tensor gradcam_weights_at(const CnnClassifier& model, const Tensor& activation, std::size_t target_class);

/// Uses the pre-softmax score of `target_class` and the post-ReLU maps of the last conv layer.
GradCamResult gradcam(const CnnClassifier& model, const Tensor& image, std::size_t target_class);

/// Half-pixel-centred bilinear resize of a [u x v] map with edge clamping.
Tensor upsample_bilinear(const Tensor& map, std::size_t height, std::size_t width);

/// Entry i of the 256-step black -> red -> yellow ramp.
std::array<double, 3> heat_color(std::size_t index);

inline constexpr double kOverlayBlend = 0.5;

/// Map divided by its maximum (all zero if the maximum is not positive), upsampled,
/// colorized and blended with the image.
Tensor heatmap_overlay(const Tensor& image, const Tensor& map, double blend = kOverlayBlend);

/// Raw map as CSV, one row per map row.
std::string gradcam_csv(const Tensor& map);
/// P6 overlay whose header comment records the ramp and blend factor.
std::string gradcam_ppm(const Tensor& overlay);

struct GradCamFiles {
    std::filesystem::path csv;
    std::filesystem::path ppm;
};

/// Writes `<stem>.cam.csv` and `<stem>.cam.ppm` next to `image_path`, or into `out_dir` if given.
GradCamFiles write_gradcam(const std::filesystem::path& image_path, const GradCamResult& result,
                           const std::filesystem::path& out_dir = {});

}  // namespace phenoseq
