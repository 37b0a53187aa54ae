// Procedural chickpea-like shoots photographed over 32 sessions from 8 angles.
//
// Geometry lives in normalized image coordinates (x right, y down, both in
// [0, 1]) so any output resolution renders the same plant.
#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "phenoseq/data.hpp"

namespace phenoseq {

namespace {

struct Rgb {
    double r, g, b;
};

Rgb lerp(const Rgb& a, const Rgb& b, double t) {
    return {a.r + (b.r - a.r) * t, a.g + (b.g - a.g) * t, a.b + (b.b - a.b) * t};
}

Rgb shade(const Rgb& c, double k) { return {c.r * k, c.g * k, c.b * k}; }

constexpr Rgb kBackground{0.94, 0.94, 0.92};
constexpr Rgb kPot{0.07, 0.07, 0.08};
constexpr Rgb kSoil{0.32, 0.24, 0.16};
constexpr Rgb kStressedFoliage{0.80, 0.72, 0.22};
constexpr Rgb kStem{0.30, 0.45, 0.18};
constexpr Rgb kStressedStem{0.55, 0.45, 0.20};

constexpr double kStemBaseY = 0.80;
constexpr int kBranches = 9;
constexpr int kLeafletsPerBranch = 6;
constexpr int kStemLeaves = 6;
constexpr double kStressedGrowthRate = 0.15;

struct Leaflet {
    double position;   // fraction along the branch
    double radius;
    double drop_threshold;
    double side;       // +1 / -1
};

struct Branch {
    double attach;      // fraction of stem height
    double emerge;      // growth units
    double azimuth;     // radians
    double elevation;   // from vertical, radians
    double max_length;
    std::array<Leaflet, kLeafletsPerBranch> leaflets;
};

struct Genotype {
    double vigor;
    double sensitivity;
    double max_height;
    Rgb foliage;
    std::array<Branch, kBranches> branches;
    std::array<Leaflet, kStemLeaves> stem_leaves;
};

Genotype make_genotype(std::uint64_t seed, int plant_index) {
    RngStream rng = RngStream(seed, hash_key("genotype")).substream(static_cast<std::uint64_t>(plant_index));
    Genotype g;
    g.vigor = rng.uniform(0.85, 1.15);
    g.sensitivity = rng.uniform(0.75, 1.25);
    g.max_height = rng.uniform(0.46, 0.58);
    g.foliage = {0.17 + rng.uniform(-0.04, 0.04), 0.52 + rng.uniform(-0.05, 0.05), 0.16 + rng.uniform(-0.03, 0.03)};
    for (int b = 0; b < kBranches; ++b) {
        Branch& br = g.branches[b];
        br.attach = rng.uniform(0.15, 0.9);
        br.emerge = 1.5 + 22.0 * b / kBranches + rng.uniform(0.0, 2.0);
        br.azimuth = rng.uniform(0.0, 2.0 * std::numbers::pi);
        br.elevation = rng.uniform(35.0, 70.0) * std::numbers::pi / 180.0;
        br.max_length = rng.uniform(0.14, 0.24);
        for (int j = 0; j < kLeafletsPerBranch; ++j) {
            br.leaflets[j] = {(j + 1.0) / (kLeafletsPerBranch + 0.5), rng.uniform(0.017, 0.026), rng.uniform(0.2, 1.0),
                              (j % 2 == 0) ? 1.0 : -1.0};
        }
    }
    for (int j = 0; j < kStemLeaves; ++j) {
        g.stem_leaves[j] = {(j + 1.0) / (kStemLeaves + 1.0), rng.uniform(0.018, 0.026), rng.uniform(0.2, 1.0),
                            (j % 2 == 0) ? 1.0 : -1.0};
    }
    return g;
}

/// Cumulative growth after `session` sessions; slows sharply once stress begins.
double growth_units(const Genotype& g, int onset, int session) {
    double total = 0.0;
    for (int s = 1; s <= session; ++s) total += (s < onset) ? g.vigor : g.vigor * kStressedGrowthRate;
    return total;
}

double stress_level(const Genotype& g, int onset, int session) {
    if (session < onset) return 0.0;
    return std::min(1.0, g.sensitivity * (session - onset + 1) / 10.0);
}

class Canvas {
public:
    Canvas(std::size_t size, double brightness) : size_(size), image_({3, size, size}) {
        const Rgb bg = shade(kBackground, brightness);
        for (std::size_t i = 0; i < size * size; ++i) set(i, bg);
    }

    void disk(double cx, double cy, double radius, const Rgb& color) {
        const double r2 = radius * radius;
        for_box(cx - radius, cy - radius, cx + radius, cy + radius, [&](std::size_t idx, double px, double py) {
            const double dx = px - cx, dy = py - cy;
            if (dx * dx + dy * dy <= r2) set(idx, color);
        });
    }

    void capsule(double x0, double y0, double x1, double y1, double half_width, const Rgb& color) {
        const double vx = x1 - x0, vy = y1 - y0;
        const double len2 = vx * vx + vy * vy;
        const double w2 = half_width * half_width;
        for_box(std::min(x0, x1) - half_width, std::min(y0, y1) - half_width, std::max(x0, x1) + half_width,
                std::max(y0, y1) + half_width, [&](std::size_t idx, double px, double py) {
                    double t = len2 > 0.0 ? ((px - x0) * vx + (py - y0) * vy) / len2 : 0.0;
                    t = std::clamp(t, 0.0, 1.0);
                    const double dx = px - (x0 + t * vx), dy = py - (y0 + t * vy);
                    if (dx * dx + dy * dy <= w2) set(idx, color);
                });
    }

    void trapezoid(double y_top, double y_bottom, double half_top, double half_bottom, const Rgb& color) {
        for_box(0.5 - half_top, y_top, 0.5 + half_top, y_bottom, [&](std::size_t idx, double px, double py) {
            const double t = (py - y_top) / (y_bottom - y_top);
            const double half = half_top + (half_bottom - half_top) * t;
            if (std::abs(px - 0.5) <= half) set(idx, color);
        });
    }

    Tensor release() { return std::move(image_); }

private:
    template <typename Fn>
    void for_box(double x0, double y0, double x1, double y1, Fn&& fn) {
        const double n = static_cast<double>(size_);
        const auto lo = [&](double v) {
            return static_cast<std::size_t>(std::clamp(std::floor(v * n - 0.5), 0.0, n - 1.0));
        };
        const auto hi = [&](double v) {
            return static_cast<std::size_t>(std::clamp(std::ceil(v * n - 0.5), 0.0, n - 1.0));
        };
        for (std::size_t y = lo(y0); y <= hi(y1); ++y) {
            for (std::size_t x = lo(x0); x <= hi(x1); ++x) {
                fn(y * size_ + x, (x + 0.5) / n, (y + 0.5) / n);
            }
        }
    }

    void set(std::size_t idx, const Rgb& c) {
        const std::size_t plane = size_ * size_;
        image_[idx] = std::clamp(c.r, 0.0, 1.0);
        image_[plane + idx] = std::clamp(c.g, 0.0, 1.0);
        image_[2 * plane + idx] = std::clamp(c.b, 0.0, 1.0);
    }

    std::size_t size_;
    Tensor image_;
};

struct Primitive {
    double depth;
    int kind;  // 0 capsule, 1 disk
    double a, b, c, d, radius;
    Rgb color;
};

}  // namespace

int stress_onset_session(StressClass c) {
    switch (c) {
        case StressClass::YoungSeedling: return 10;
        case StressClass::BeforeFlowering: return 18;
        case StressClass::Control: return kMaxSessions + 1;
    }
    return kMaxSessions + 1;
}

Tensor render_plant(std::uint64_t seed, int plant_index, StressClass label, int session, int angle,
                    std::size_t image_size) {
    if (image_size < 8) throw ValidationError("render_plant: image size must be >= 8");
    if (session < 1 || session > kMaxSessions) throw ValidationError("render_plant: session out of range");
    const Genotype g = make_genotype(seed, plant_index);
    const int onset = stress_onset_session(label);
    const double growth = growth_units(g, onset, session);
    const double stress = stress_level(g, onset, session);

    // Capture conditions vary slightly per photo but not with the treatment.
    RngStream capture = RngStream(seed, hash_key("capture"))
                            .substream(static_cast<std::uint64_t>(plant_index))
                            .substream(static_cast<std::uint64_t>(session * 16 + angle));
    const double brightness = capture.uniform(0.97, 1.03);

    Canvas canvas(image_size, brightness);
    canvas.trapezoid(kStemBaseY, 0.98, 0.17, 0.13, shade(kPot, brightness));
    canvas.trapezoid(kStemBaseY, kStemBaseY + 0.025, 0.165, 0.165, shade(kSoil, brightness));

    const double px_unit = 1.0 / static_cast<double>(image_size);
    const double view = angle * std::numbers::pi / 4.0;
    const Rgb foliage = lerp(g.foliage, kStressedFoliage, 0.9 * stress);
    const Rgb stem_color = lerp(kStem, kStressedStem, 0.8 * stress);
    const double height = g.max_height * (1.0 - std::exp(-growth / 14.0)) + 0.04;
    const double stem_width = std::max(0.012, 1.1 * px_unit);
    const double leaf_scale = std::min(1.0, 0.45 + growth / 20.0);

    std::vector<Primitive> prims;
    prims.push_back({0.0, 0, 0.5, kStemBaseY, 0.5, kStemBaseY - height, stem_width, shade(stem_color, brightness)});

    auto add_leaflet = [&](double x, double y, double dir_x, double dir_y, const Leaflet& leaf, double depth) {
        if (stress > leaf.drop_threshold) return;
        const double r = leaf.radius * leaf_scale;
        const double nx = -dir_y * leaf.side, ny = dir_x * leaf.side;
        const double norm = std::max(1e-9, std::hypot(nx, ny));
        const double off = 1.2 * r;
        const double k = (1.0 - 0.12 * depth) * brightness;
        prims.push_back({depth + 1e-3, 1, x + nx / norm * off, y + ny / norm * off, 0, 0, r, shade(foliage, k)});
    };

    for (const Leaflet& leaf : g.stem_leaves) {
        if (growth < leaf.position * 6.0) continue;
        add_leaflet(0.5, kStemBaseY - height * leaf.position, 0.0, -1.0, leaf, 0.0);
    }

    for (const Branch& br : g.branches) {
        if (growth <= br.emerge) continue;
        const double maturity = std::min(1.0, (growth - br.emerge) / 8.0);
        const double length = br.max_length * maturity;
        const double droop = br.elevation + 0.35 * stress;
        const double az = br.azimuth + view;
        const double dir_x = std::sin(droop) * std::cos(az);
        const double dir_y = -std::cos(droop);
        const double depth = std::sin(droop) * std::sin(az);
        const double x0 = 0.5;
        const double y0 = kStemBaseY - height * br.attach;
        const double x1 = x0 + length * dir_x;
        const double y1 = y0 + length * dir_y;
        prims.push_back({depth, 0, x0, y0, x1, y1, 0.75 * stem_width, shade(stem_color, (1.0 - 0.12 * depth) * brightness)});
        for (const Leaflet& leaf : br.leaflets) {
            if (maturity < leaf.position) continue;
            add_leaflet(x0 + (x1 - x0) * leaf.position, y0 + (y1 - y0) * leaf.position, dir_x, dir_y, leaf, depth);
        }
    }

    // Painter's order: far (positive depth) first.
    std::stable_sort(prims.begin(), prims.end(), [](const Primitive& a, const Primitive& b) { return a.depth > b.depth; });
    for (const Primitive& p : prims) {
        if (p.kind == 0) {
            canvas.capsule(p.a, p.b, p.c, p.d, p.radius, p.color);
        } else {
            canvas.disk(p.a, p.b, p.radius, p.color);
        }
    }
    return canvas.release();
}

namespace {

std::string plant_id_for(StressClass c, int index) {
    std::string id(class_code(c));
    id += '-';
    if (index + 1 < 10) id += '0';
    id += std::to_string(index + 1);
    return id;
}

void check_config(const SyntheticConfig& config) {
    if (config.plants_per_class < 1) throw ValidationError("plants per class must be >= 1");
    if (config.sessions < 1 || config.sessions > kMaxSessions) throw ValidationError("sessions must be in 1..32");
    if (config.angles < 1 || config.angles > kAngles) throw ValidationError("angles must be in 1..8");
}

}  // namespace

std::vector<ImageSequence> synthesize_sequences(const SyntheticConfig& config) {
    check_config(config);
    std::vector<ImageSequence> out;
    for (StressClass c : kAllClasses) {
        for (int p = 0; p < config.plants_per_class; ++p) {
            for (int a = 0; a < config.angles; ++a) {
                ImageSequence seq;
                seq.label = c;
                seq.species = config.species;
                seq.plant_id = plant_id_for(c, p);
                seq.angle_index = a;
                for (int s = 1; s <= config.sessions; ++s) {
                    // Quantize through the 8-bit file format so in-memory and on-disk datasets agree.
                    seq.frames.push_back(decode_ppm(encode_ppm(render_plant(config.seed, p, c, s, a, config.image_size))));
                    seq.session_indices.push_back(s);
                }
                out.push_back(std::move(seq));
            }
        }
    }
    return out;
}

GeneratedDataset generate_synthetic(const std::filesystem::path& root, const SyntheticConfig& config) {
    check_config(config);
    std::filesystem::create_directories(root);
    std::vector<ManifestRow> rows;
    for (StressClass c : kAllClasses) {
        for (int p = 0; p < config.plants_per_class; ++p) {
            const std::string plant = plant_id_for(c, p);
            const std::filesystem::path rel = std::filesystem::path(config.species) / std::string(class_code(c)) / plant;
            std::filesystem::create_directories(root / rel);
            for (int s = 1; s <= config.sessions; ++s) {
                for (int a = 0; a < config.angles; ++a) {
                    const std::string name = "s" + std::to_string(s) + "_a" + std::to_string(a) + ".ppm";
                    write_ppm(root / rel / name, render_plant(config.seed, p, c, s, a, config.image_size));
                    rows.push_back({(rel / name).generic_string(), plant, config.species, c, s, a});
                }
            }
        }
    }
    GeneratedDataset result;
    result.manifest_path = root / "manifest.csv";
    write_manifest(result.manifest_path, rows);
    result.images = rows.size();
    result.sequences = static_cast<std::size_t>(config.plants_per_class) * kNumClasses * config.angles;
    return result;
}

}  // namespace phenoseq
