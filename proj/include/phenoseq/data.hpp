#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "phenoseq/classes.hpp"
#include "phenoseq/rng.hpp"
#include "phenoseq/tensor.hpp"

namespace phenoseq {

inline constexpr int kMaxSessions = 32;
inline constexpr int kAngles = 8;

// ---------------------------------------------------------------------------
// Images
// ---------------------------------------------------------------------------

/// Reads a binary (P6) PPM into a [3 x h x w] tensor scaled to [0, 1].
Tensor read_ppm(const std::filesystem::path& path);
/// Writes a [3 x h x w] tensor in [0, 1] as an 8-bit binary PPM. Values are clamped and rounded.
void write_ppm(const std::filesystem::path& path, const Tensor& image);
std::string encode_ppm(const Tensor& image);
Tensor decode_ppm(const std::string& bytes, const std::string& source = "<memory>");

// ---------------------------------------------------------------------------
// Sequences and manifests
// ---------------------------------------------------------------------------

/// The frames of one plant photographed from one angle, in session order.
struct ImageSequence {
    std::vector<Tensor> frames;  ///< each [3 x h x w] in [0, 1]
    StressClass label = StressClass::Control;
    std::string species;
    std::string plant_id;
    int angle_index = 0;
    std::vector<int> session_indices;  ///< ascending, subset of 1..32

    std::size_t length() const { return frames.size(); }
    /// Throws ValidationError if frames/sessions disagree or frame shapes differ.
    void validate() const;
};

struct ManifestRow {
    std::string path;
    std::string plant_id;
    std::string species;
    StressClass label = StressClass::Control;
    int session = 1;
    int angle = 0;
};

inline constexpr const char* kManifestHeader = "path,plant_id,species,class,session,angle";

std::vector<ManifestRow> read_manifest(const std::filesystem::path& manifest_path);
void write_manifest(const std::filesystem::path& manifest_path, const std::vector<ManifestRow>& rows);

/// One sequence per (species, plant, angle); frames in ascending session order.
/// Paths are resolved relative to the manifest's directory.
std::vector<ImageSequence> load_dataset(const std::filesystem::path& manifest_path);

/// FNV-1a 64 over the manifest bytes followed by every referenced file, in manifest order.
std::uint64_t hash_dataset_files(const std::filesystem::path& manifest_path);
/// FNV-1a 64 over labels, ids, sessions and the exact bits of every pixel.
std::uint64_t hash_sequences(const std::vector<ImageSequence>& sequences);
std::string hex64(std::uint64_t value);

/// Keeps the frames whose session is <= n.
ImageSequence truncate_sessions(const ImageSequence& seq, int n);

// ---------------------------------------------------------------------------
// Synthetic progressive-stress plants
// ---------------------------------------------------------------------------

struct SyntheticConfig {
    std::uint64_t seed = 42;
    int plants_per_class = 5;
    int sessions = kMaxSessions;
    int angles = kAngles;
    std::size_t image_size = 64;
    std::string species = "synthetic";
};

/// Session at which the class's water stress starts; Control never stresses.
int stress_onset_session(StressClass c);

/// Renders plant `plant_index` of class `label` at one session and viewing angle.
/// Plants sharing an index share a genotype, so the three classes render
/// identically until the earliest onset among them.
Tensor render_plant(std::uint64_t seed, int plant_index, StressClass label, int session, int angle,
                    std::size_t image_size);

struct GeneratedDataset {
    std::filesystem::path manifest_path;
    std::size_t images = 0;
    std::size_t sequences = 0;
};

/// Writes `<root>/<species>/<class>/<plant_id>/s<session>_a<angle>.ppm` and `<root>/manifest.csv`.
GeneratedDataset generate_synthetic(const std::filesystem::path& root, const SyntheticConfig& config);

/// In-memory variant of generate_synthetic producing the same sequences load_dataset would return.
std::vector<ImageSequence> synthesize_sequences(const SyntheticConfig& config);

// ---------------------------------------------------------------------------
// Augmentation
// ---------------------------------------------------------------------------

struct AugmentPolicy {
    double flip_probability = 0.5;
    double rotation_degrees = 15.0;
    double shear_degrees = 10.0;
    double translation_pixels = 8.0;
    double noise_probability = 0.1;
    double noise_fraction = 0.15;  ///< noise sigma as a fraction of the maximum intensity
    double max_intensity = 1.0;

    static AugmentPolicy identity();
    double noise_sigma() const { return noise_fraction * max_intensity; }
    void validate() const;
};

/// sigma = 15% of the maximum pixel intensity.
double noise_sigma_for(double max_intensity);

/// Geometric parameters drawn once for a whole sequence.
struct GeometricDraw {
    bool flip = false;
    double rotation_degrees = 0.0;
    double shear_degrees = 0.0;
    double translate_x = 0.0;
    double translate_y = 0.0;
    bool noise = false;

    bool is_identity() const;
    friend bool operator==(const GeometricDraw&, const GeometricDraw&) = default;
};

GeometricDraw draw_geometry(const AugmentPolicy& policy, RngStream& rng);

/// Applies flip, rotation, shear and translation about the image centre with
/// bilinear resampling and edge clamping.
Tensor apply_geometry(const Tensor& image, const GeometricDraw& draw);

/// Adds N(0, sigma^2) to every pixel and clamps to [0, 1].
Tensor add_gaussian_noise(const Tensor& image, double sigma, RngStream& rng);

struct AugmentedSequence {
    ImageSequence sequence;
    std::vector<GeometricDraw> frame_draws;  ///< parameters applied to each frame
};

/// One geometric draw for the sequence, applied to every frame; optional noise
/// uses an independent substream per session so truncation leaves earlier frames unchanged.
AugmentedSequence augment_sequence(const ImageSequence& seq, const AugmentPolicy& policy, const RngStream& rng);

struct PerturbedSequence {
    ImageSequence sequence;
    std::vector<std::size_t> perturbed_frames;  ///< ascending frame positions
};

/// Adds noise to exactly k distinct, uniformly chosen frames.
PerturbedSequence perturb_test_sequence(const ImageSequence& seq, std::size_t k, RngStream& rng,
                                        double sigma = noise_sigma_for(1.0));

// ---------------------------------------------------------------------------
// Cross-validation folds
// ---------------------------------------------------------------------------

struct FoldPlan {
    std::size_t k = 5;
    std::size_t repeat = 0;
    std::vector<std::size_t> fold_of;  ///< fold index per sequence

    std::vector<std::size_t> test_indices(std::size_t fold) const;
    std::vector<std::size_t> train_indices(std::size_t fold) const;
};

/// Stratified, disjoint and exhaustive folds; per-class fold sizes differ by at most one.
FoldPlan stratified_kfold(const std::vector<StressClass>& labels, std::size_t k, std::uint64_t seed,
                          std::size_t repeat);
std::vector<StressClass> labels_of(const std::vector<ImageSequence>& sequences);

/// Stratified folds that never split a group. Groups are dealt in a seeded order
/// to the fold with the fewest members of the group's classes; throws if the
/// result is not stratified.
FoldPlan stratified_group_kfold(const std::vector<StressClass>& labels, const std::vector<std::size_t>& groups,
                                std::size_t k, std::uint64_t seed, std::size_t repeat);

/// Group id per sequence: the same species, angle and plant number after the
/// "<class>-" prefix (the generator's twins across classes). Other ids form their own group.
std::vector<std::size_t> twin_groups(const std::vector<ImageSequence>& sequences);

}  // namespace phenoseq
