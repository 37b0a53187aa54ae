#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "phenoseq/data.hpp"

namespace phenoseq {

AugmentPolicy AugmentPolicy::identity() {
    AugmentPolicy p;
    p.flip_probability = 0.0;
    p.rotation_degrees = 0.0;
    p.shear_degrees = 0.0;
    p.translation_pixels = 0.0;
    p.noise_probability = 0.0;
    return p;
}

void AugmentPolicy::validate() const {
    const auto probability = [](double p) { return p >= 0.0 && p <= 1.0; };
    if (!probability(flip_probability) || !probability(noise_probability)) {
        throw ValidationError("augment policy: probabilities must lie in [0, 1]");
    }
    if (!(rotation_degrees >= 0.0) || !(shear_degrees >= 0.0) || shear_degrees >= 89.0 ||
        !(translation_pixels >= 0.0)) {
        throw ValidationError("augment policy: ranges must be non-negative (shear < 89 degrees)");
    }
    if (!(noise_fraction >= 0.0) || !(max_intensity > 0.0)) {
        throw ValidationError("augment policy: noise fraction must be >= 0 and max intensity > 0");
    }
}

double noise_sigma_for(double max_intensity) { return 0.15 * max_intensity; }

bool GeometricDraw::is_identity() const {
    return !flip && rotation_degrees == 0.0 && shear_degrees == 0.0 && translate_x == 0.0 && translate_y == 0.0;
}

GeometricDraw draw_geometry(const AugmentPolicy& policy, RngStream& rng) {
    policy.validate();
    GeometricDraw d;
    d.flip = rng.bernoulli(policy.flip_probability);
    d.rotation_degrees = rng.uniform(-policy.rotation_degrees, policy.rotation_degrees);
    d.shear_degrees = rng.uniform(-policy.shear_degrees, policy.shear_degrees);
    d.translate_x = rng.uniform(-policy.translation_pixels, policy.translation_pixels);
    d.translate_y = rng.uniform(-policy.translation_pixels, policy.translation_pixels);
    d.noise = rng.bernoulli(policy.noise_probability);
    return d;
}

Tensor apply_geometry(const Tensor& image, const GeometricDraw& draw) {
    if (image.rank() != 3) throw ShapeError("apply_geometry: expected [ch x h x w], got " + shape_to_string(image.shape()));
    if (draw.is_identity()) return image;
    const std::size_t ch = image.dim(0), h = image.dim(1), w = image.dim(2);
    const double cx = (static_cast<double>(w) - 1.0) / 2.0;
    const double cy = (static_cast<double>(h) - 1.0) / 2.0;
    const double theta = draw.rotation_degrees * std::numbers::pi / 180.0;
    const double cos_t = std::cos(theta), sin_t = std::sin(theta);
    const double shear = std::tan(draw.shear_degrees * std::numbers::pi / 180.0);

    Tensor out(image.shape());
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            // Invert: translate, rotate, shear, flip (forward order is flip, shear, rotate, translate).
            double qx = static_cast<double>(x) - cx - draw.translate_x;
            double qy = static_cast<double>(y) - cy - draw.translate_y;
            const double rx = cos_t * qx + sin_t * qy;
            const double ry = -sin_t * qx + cos_t * qy;
            qx = rx - shear * ry;
            qy = ry;
            if (draw.flip) qx = -qx;
            const double sx = std::clamp(qx + cx, 0.0, static_cast<double>(w) - 1.0);
            const double sy = std::clamp(qy + cy, 0.0, static_cast<double>(h) - 1.0);
            const auto x0 = static_cast<std::size_t>(std::floor(sx));
            const auto y0 = static_cast<std::size_t>(std::floor(sy));
            const std::size_t x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
            const double fx = sx - static_cast<double>(x0), fy = sy - static_cast<double>(y0);
            for (std::size_t c = 0; c < ch; ++c) {
                const double top = image.at(c, y0, x0) * (1.0 - fx) + image.at(c, y0, x1) * fx;
                const double bottom = image.at(c, y1, x0) * (1.0 - fx) + image.at(c, y1, x1) * fx;
                out.at(c, y, x) = top * (1.0 - fy) + bottom * fy;
            }
        }
    }
    return out;
}

Tensor add_gaussian_noise(const Tensor& image, double sigma, RngStream& rng) {
    Tensor noise = gaussian_sample(rng, 0.0, sigma, image.shape());
    Tensor out = image;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(out[i] + noise[i], 0.0, 1.0);
    return out;
}

AugmentedSequence augment_sequence(const ImageSequence& seq, const AugmentPolicy& policy, const RngStream& rng) {
    RngStream draw_rng = rng.substream("geometry");
    const GeometricDraw draw = draw_geometry(policy, draw_rng);
    const RngStream noise_root = rng.substream("noise");
    AugmentedSequence out;
    out.sequence = seq;
    out.frame_draws.reserve(seq.frames.size());
    for (std::size_t t = 0; t < seq.frames.size(); ++t) {
        Tensor frame = apply_geometry(seq.frames[t], draw);
        if (draw.noise && policy.noise_sigma() > 0.0) {
            RngStream noise_rng = noise_root.substream(static_cast<std::uint64_t>(seq.session_indices[t]));
            frame = add_gaussian_noise(frame, policy.noise_sigma(), noise_rng);
        }
        out.sequence.frames[t] = std::move(frame);
        out.frame_draws.push_back(draw);
    }
    return out;
}

PerturbedSequence perturb_test_sequence(const ImageSequence& seq, std::size_t k, RngStream& rng, double sigma) {
    if (k < 1 || k > seq.frames.size()) {
        throw ValidationError("perturb_test_sequence: k=" + std::to_string(k) + " outside 1.." +
                              std::to_string(seq.frames.size()));
    }
    std::vector<std::size_t> order(seq.frames.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(order.size() - i));
        std::swap(order[i], order[j]);
    }
    PerturbedSequence out;
    out.perturbed_frames.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
    std::sort(out.perturbed_frames.begin(), out.perturbed_frames.end());
    out.sequence = seq;
    for (std::size_t t : out.perturbed_frames) {
        out.sequence.frames[t] = add_gaussian_noise(seq.frames[t], sigma, rng);
    }
    return out;
}

}  // namespace phenoseq
