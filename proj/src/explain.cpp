#include "phenoseq/explain.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "phenoseq/data.hpp"

namespace phenoseq {

Tensor gradcam_weights(const Tensor& gradients) {
    if (gradients.rank() != 3) throw ShapeError("gradcam_weights: expected [K x u x v], got " + shape_to_string(gradients.shape()));
    const std::size_t k = gradients.dim(0), z = gradients.dim(1) * gradients.dim(2);
    Tensor alpha = Tensor::zeros({k});
    for (std::size_t c = 0; c < k; ++c) {
        double total = 0.0;
        for (std::size_t i = 0; i < z; ++i) total += gradients[c * z + i];
        alpha[c] = total / static_cast<double>(z);
    }
    return alpha;
}

Tensor gradcam_map(const Tensor& activations, const Tensor& weights) {
    if (activations.rank() != 3 || weights.rank() != 1 || weights.size() != activations.dim(0)) {
        throw ShapeError("gradcam_map: maps " + shape_to_string(activations.shape()) + " vs weights " +
                         shape_to_string(weights.shape()));
    }
    const std::size_t u = activations.dim(1), v = activations.dim(2), z = u * v;
    Tensor map = Tensor::zeros({u, v});
    for (std::size_t c = 0; c < weights.size(); ++c) {
        for (std::size_t i = 0; i < z; ++i) map[i] += weights[c] * activations[c * z + i];
    }
    for (double& x : map.values()) x = std::max(x, 0.0);
    return map;
}

namespace {

void check_class(const CnnClassifier& model, std::size_t target_class) {
    if (target_class >= model.config.classes) {
        throw ValidationError("class index " + std::to_string(target_class) + " out of range for " +
                              std::to_string(model.config.classes) + " classes");
    }
}

}  // namespace

Tensor gradcam_weights_at(const CnnClassifier& model, const Tensor& activation, std::size_t target_class) {
    check_class(model, target_class);
    const HeadPass head = model.head.forward(model.norm.apply(model.extractor.features_from_last_activation(activation)));
    Tensor grad_logits = Tensor::zeros({model.config.classes});
    grad_logits[target_class] = 1.0;
    GradientMap unused;
    const Tensor grad_features = model.norm.backward(model.head.backward(head, grad_logits, unused, "head"));
    return gradcam_weights(model.extractor.last_activation_gradient(activation, grad_features));
}

GradCamResult gradcam(const CnnClassifier& model, const Tensor& image, std::size_t target_class) {
    check_class(model, target_class);
    GradCamResult r;
    r.target_class = target_class;
    r.activations = model.extractor.forward(image).blocks.back().activation;
    r.weights = gradcam_weights_at(model, r.activations, target_class);
    r.map = gradcam_map(r.activations, r.weights);
    r.overlay = heatmap_overlay(image, r.map);
    return r;
}

Tensor upsample_bilinear(const Tensor& map, std::size_t height, std::size_t width) {
    if (map.rank() != 2) throw ShapeError("upsample_bilinear: expected [u x v], got " + shape_to_string(map.shape()));
    const std::size_t u = map.dim(0), v = map.dim(1);
    Tensor out = Tensor::zeros({height, width});
    auto source = [](std::size_t dst, std::size_t dst_n, std::size_t src_n) {
        const double s = (static_cast<double>(dst) + 0.5) * static_cast<double>(src_n) / static_cast<double>(dst_n) - 0.5;
        return std::clamp(s, 0.0, static_cast<double>(src_n - 1));
    };
    for (std::size_t y = 0; y < height; ++y) {
        const double sy = source(y, height, u);
        const std::size_t y0 = static_cast<std::size_t>(sy), y1 = std::min(y0 + 1, u - 1);
        const double fy = sy - static_cast<double>(y0);
        for (std::size_t x = 0; x < width; ++x) {
            const double sx = source(x, width, v);
            const std::size_t x0 = static_cast<std::size_t>(sx), x1 = std::min(x0 + 1, v - 1);
            const double fx = sx - static_cast<double>(x0);
            const double top = map.at(y0, x0) * (1.0 - fx) + map.at(y0, x1) * fx;
            const double bottom = map.at(y1, x0) * (1.0 - fx) + map.at(y1, x1) * fx;
            out.at(y, x) = top * (1.0 - fy) + bottom * fy;
        }
    }
    return out;
}

std::array<double, 3> heat_color(std::size_t index) {
    const double t = static_cast<double>(std::min<std::size_t>(index, 255)) / 255.0;
    return {std::min(1.0, 2.0 * t), std::max(0.0, 2.0 * t - 1.0), 0.0};
}

Tensor heatmap_overlay(const Tensor& image, const Tensor& map, double blend) {
    if (image.rank() != 3 || image.dim(0) != 3) {
        throw ShapeError("heatmap_overlay: expected [3 x h x w] image, got " + shape_to_string(image.shape()));
    }
    const std::size_t h = image.dim(1), w = image.dim(2);
    Tensor display = map;
    const double peak = display.size() ? *std::max_element(display.values().begin(), display.values().end()) : 0.0;
    for (double& x : display.values()) x = peak > 0.0 ? x / peak : 0.0;
    const Tensor up = upsample_bilinear(display, h, w);
    Tensor out = image;
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            const auto color = heat_color(static_cast<std::size_t>(std::lround(std::clamp(up.at(y, x), 0.0, 1.0) * 255.0)));
            for (std::size_t c = 0; c < 3; ++c) {
                out.at(c, y, x) = (1.0 - blend) * image.at(c, y, x) + blend * color[c];
            }
        }
    }
    return out;
}

std::string gradcam_csv(const Tensor& map) {
    if (map.rank() != 2) throw ShapeError("gradcam_csv: expected [u x v], got " + shape_to_string(map.shape()));
    std::ostringstream out;
    out.precision(17);
    for (std::size_t i = 0; i < map.dim(0); ++i) {
        for (std::size_t j = 0; j < map.dim(1); ++j) out << (j ? "," : "") << map.at(i, j);
        out << '\n';
    }
    return out.str();
}

std::string gradcam_ppm(const Tensor& overlay) {
    std::string bytes = encode_ppm(overlay);
    // Readers skip header comments, so the colormap note travels with the image.
    bytes.insert(3, "# grad-cam overlay: map/max -> 256-step ramp black-red-yellow, blend 0.5\n");
    return bytes;
}

GradCamFiles write_gradcam(const std::filesystem::path& image_path, const GradCamResult& result,
                           const std::filesystem::path& out_dir) {
    const std::filesystem::path dir = out_dir.empty() ? image_path.parent_path() : out_dir;
    if (!dir.empty()) std::filesystem::create_directories(dir);
    const std::string stem = image_path.stem().string();
    GradCamFiles files{dir / (stem + ".cam.csv"), dir / (stem + ".cam.ppm")};
    std::ofstream csv(files.csv, std::ios::binary);
    csv << gradcam_csv(result.map);
    std::ofstream ppm(files.ppm, std::ios::binary);
    ppm << gradcam_ppm(result.overlay);
    if (!csv || !ppm) throw std::runtime_error("cannot write grad-cam outputs to " + dir.string());
    return files;
}

}  // namespace phenoseq
