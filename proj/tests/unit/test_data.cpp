#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "numeric.hpp"
#include "phenoseq/data.hpp"

using namespace phenoseq;
using namespace phenoseq::testing;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("phenoseq_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
}

std::string error_of(const fs::path& manifest) {
    try {
        load_dataset(manifest);
    } catch (const ValidationError& e) {
        return e.what();
    }
    return "";
}

SyntheticConfig small_config() {
    SyntheticConfig c;
    c.image_size = 16;
    return c;
}

double mean_abs_difference(const Tensor& a, const Tensor& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
    return s / static_cast<double>(a.size());
}

ImageSequence ramp_sequence(std::size_t T) {
    ImageSequence seq;
    seq.plant_id = "ramp";
    for (std::size_t t = 0; t < T; ++t) {
        seq.frames.push_back(Tensor({3, 4, 4}, 0.1 * static_cast<double>(t % 10)));
        seq.session_indices.push_back(static_cast<int>(t) + 1);
    }
    return seq;
}

}  // namespace

TEST(Ppm, RoundTripPreservesEightBitValues) {
    RngStream rng(1, 0);
    Tensor img({3, 5, 7});
    for (double& v : img.values()) v = static_cast<double>(rng.below(256)) / 255.0;
    const std::string bytes = encode_ppm(img);
    const Tensor back = decode_ppm(bytes);
    for (std::size_t i = 0; i < img.size(); ++i) EXPECT_NEAR(back[i], img[i], 1e-15);
    EXPECT_EQ(encode_ppm(back), bytes);
    const fs::path dir = fresh_dir("ppm");
    write_ppm(dir / "x.ppm", img);
    EXPECT_EQ(read_ppm(dir / "x.ppm"), back);
}

TEST(Ppm, ClampsAndRejectsMalformedInput) {
    const Tensor img({3, 1, 2}, std::vector<double>{-1, 2, 0.5, 0.5, 0, 1});
    const Tensor back = decode_ppm(encode_ppm(img));
    EXPECT_EQ(back[0], 0.0);
    EXPECT_EQ(back[1], 1.0);
    EXPECT_THROW(decode_ppm("P5\n1 1\n255\n\x01"), ValidationError);
    EXPECT_THROW(decode_ppm("P6\n2 2\n255\nabc"), ValidationError);
    EXPECT_THROW(decode_ppm("P6\n1 1\n65535\n"), ValidationError);
    EXPECT_THROW(encode_ppm(Tensor::zeros({1, 2, 2})), ShapeError);
    EXPECT_THROW(read_ppm("/nonexistent/none.ppm"), ValidationError);
}

TEST(Manifest, ErrorsNameTheRow) {
    const fs::path dir = fresh_dir("manifest_errors");
    write_ppm(dir / "a.ppm", Tensor({3, 4, 4}, 0.5));
    const std::string header = std::string(kManifestHeader) + "\n";

    write_text(dir / "m1.csv", "wrong,header\n");
    EXPECT_NE(error_of(dir / "m1.csv").find("row 1"), std::string::npos);

    write_text(dir / "m2.csv", header + "a.ppm,p1,sp,C,1,0\na.ppm,p1,sp,XX,2,0\n");
    EXPECT_NE(error_of(dir / "m2.csv").find("row 3"), std::string::npos) << error_of(dir / "m2.csv");

    write_text(dir / "m3.csv", header + "a.ppm,p1,sp,C,33,0\n");
    EXPECT_NE(error_of(dir / "m3.csv").find("row 2"), std::string::npos);

    write_text(dir / "m4.csv", header + "a.ppm,p1,sp,C,1,0\nmissing.ppm,p1,sp,C,2,0\n");
    const std::string missing = error_of(dir / "m4.csv");
    EXPECT_NE(missing.find("row 3"), std::string::npos) << missing;
    EXPECT_NE(missing.find("missing file"), std::string::npos) << missing;

    write_text(dir / "m5.csv", header + "a.ppm,p1,sp,C,1,0\na.ppm,p1,sp,C,1,0\n");
    EXPECT_NE(error_of(dir / "m5.csv").find("duplicate session"), std::string::npos);

    write_text(dir / "m6.csv", header + "a.ppm,p1,sp,C,1,0,extra\n");
    EXPECT_NE(error_of(dir / "m6.csv").find("row 2"), std::string::npos);

    write_text(dir / "m7.csv", header + "a.ppm,p1,sp,C,1,0\na.ppm,p1,sp,YS,2,0\n");
    EXPECT_NE(error_of(dir / "m7.csv").find("more than one class"), std::string::npos);

    EXPECT_THROW(load_dataset(dir / "absent.csv"), ValidationError);
}

TEST(Manifest, HeaderOnlyGivesNoSequences) {
    const fs::path dir = fresh_dir("manifest_empty");
    write_text(dir / "m.csv", std::string(kManifestHeader) + "\n");
    EXPECT_TRUE(load_dataset(dir / "m.csv").empty());
}

TEST(Manifest, RowsInAnyOrderGiveAscendingSessions) {
    const fs::path dir = fresh_dir("manifest_order");
    for (int s = 1; s <= 3; ++s) write_ppm(dir / ("s" + std::to_string(s) + ".ppm"), Tensor({3, 4, 4}, 0.1 * s));
    write_text(dir / "m.csv", std::string(kManifestHeader) + "\ns3.ppm,p,sp,BF,3,2\ns1.ppm,p,sp,BF,1,2\ns2.ppm,p,sp,BF,2,2\n");
    const auto seqs = load_dataset(dir / "m.csv");
    ASSERT_EQ(seqs.size(), 1u);
    EXPECT_EQ(seqs[0].session_indices, (std::vector<int>{1, 2, 3}));
    EXPECT_EQ(seqs[0].label, StressClass::BeforeFlowering);
    EXPECT_EQ(seqs[0].angle_index, 2);
    EXPECT_NEAR(seqs[0].frames[2][0], 0.3, 1.0 / 255.0);
}

TEST(Synthetic, DefaultDatasetShape) {
    const auto seqs = synthesize_sequences(small_config());
    ASSERT_EQ(seqs.size(), 120u);
    std::map<StressClass, int> per_class;
    for (const auto& s : seqs) {
        ++per_class[s.label];
        ASSERT_EQ(s.length(), 32u);
        EXPECT_EQ(s.session_indices.front(), 1);
        EXPECT_EQ(s.session_indices.back(), 32);
        EXPECT_EQ(s.frames[0].shape(), (Shape{3, 16, 16}));
        EXPECT_NO_THROW(s.validate());
    }
    for (StressClass c : kAllClasses) EXPECT_EQ(per_class[c], 40);
    std::set<int> angles;
    for (const auto& s : seqs) angles.insert(s.angle_index);
    EXPECT_EQ(angles.size(), 8u);
}

TEST(Synthetic, FilesAreByteDeterministicAndMatchInMemoryVersion) {
    SyntheticConfig c = small_config();
    c.plants_per_class = 1;
    c.sessions = 4;
    const fs::path a = fresh_dir("synth_a"), b = fresh_dir("synth_b");
    const GeneratedDataset ga = generate_synthetic(a, c);
    const GeneratedDataset gb = generate_synthetic(b, c);
    EXPECT_EQ(ga.images, 3u * 8u * 4u);
    EXPECT_EQ(ga.sequences, 24u);
    EXPECT_EQ(hash_dataset_files(ga.manifest_path), hash_dataset_files(gb.manifest_path));
    const auto loaded = load_dataset(ga.manifest_path);
    EXPECT_EQ(hash_sequences(loaded), hash_sequences(synthesize_sequences(c)));
    c.seed = 43;
    EXPECT_NE(hash_sequences(loaded), hash_sequences(synthesize_sequences(c)));
}

TEST(Synthetic, EarlyRendersMatchAndLateRendersDiverge) {
    for (StressClass stressed : {StressClass::YoungSeedling, StressClass::BeforeFlowering}) {
        for (int plant = 0; plant < 5; ++plant) {
            for (int angle = 0; angle < 8; angle += 3) {
                const double early = mean_abs_difference(render_plant(42, plant, stressed, 3, angle, 32),
                                                         render_plant(42, plant, StressClass::Control, 3, angle, 32));
                const double late = mean_abs_difference(render_plant(42, plant, stressed, 30, angle, 32),
                                                        render_plant(42, plant, StressClass::Control, 30, angle, 32));
                EXPECT_EQ(early, 0.0);
                EXPECT_LE(early, late);
                EXPECT_GT(late, 0.0);
            }
        }
    }
    EXPECT_LT(stress_onset_session(StressClass::YoungSeedling), stress_onset_session(StressClass::BeforeFlowering));
    EXPECT_GT(stress_onset_session(StressClass::Control), kMaxSessions);
}

TEST(Synthetic, ClassDivergenceIsNonDecreasingAfterOnset) {
    // Class-level statistic: control-vs-stressed pixel MAD averaged over every plant
    // and angle of the default dataset. Single renders jitter with capture brightness.
    const SyntheticConfig c;
    for (StressClass stressed : {StressClass::YoungSeedling, StressClass::BeforeFlowering}) {
        double previous = 0.0;
        for (int s = 1; s <= kMaxSessions; ++s) {
            double total = 0.0;
            for (int plant = 0; plant < c.plants_per_class; ++plant) {
                for (int angle = 0; angle < c.angles; ++angle) {
                    total += mean_abs_difference(render_plant(c.seed, plant, stressed, s, angle, c.image_size),
                                                 render_plant(c.seed, plant, StressClass::Control, s, angle, c.image_size));
                }
            }
            const double divergence = total / (c.plants_per_class * c.angles);
            if (s < stress_onset_session(stressed)) {
                EXPECT_EQ(divergence, 0.0) << "session " << s;
            } else {
                EXPECT_GE(divergence, previous) << class_code(stressed) << " session " << s;
            }
            previous = divergence;
        }
        EXPECT_GT(previous, 0.02);
    }
}

TEST(Synthetic, RejectsBadConfig) {
    SyntheticConfig c = small_config();
    c.sessions = 0;
    EXPECT_THROW(synthesize_sequences(c), ValidationError);
    c = small_config();
    c.plants_per_class = 0;
    EXPECT_THROW(synthesize_sequences(c), ValidationError);
    EXPECT_THROW(render_plant(1, 0, StressClass::Control, 33, 0, 16), ValidationError);
}

TEST(Augment, IdentityPolicyLeavesFramesUnchanged) {
    SyntheticConfig c = small_config();
    c.plants_per_class = 1;
    c.sessions = 3;
    const auto seqs = synthesize_sequences(c);
    const AugmentedSequence a = augment_sequence(seqs[0], AugmentPolicy::identity(), RngStream(1, 2));
    for (std::size_t t = 0; t < 3; ++t) EXPECT_EQ(a.sequence.frames[t], seqs[0].frames[t]);
    EXPECT_TRUE(a.frame_draws[0].is_identity());
}

TEST(Augment, FlipIsAnInvolution) {
    RngStream rng(3, 0);
    const Tensor img = uniform_tensor(rng, {3, 9, 12}, 0, 1);
    GeometricDraw flip;
    flip.flip = true;
    const Tensor once = apply_geometry(img, flip);
    EXPECT_NE(once, img);
    EXPECT_EQ(once.at(0, 2, 0), img.at(0, 2, 11));
    EXPECT_EQ(apply_geometry(once, flip), img);
}

TEST(Augment, OneDrawSharedByEveryFrame) {
    SyntheticConfig c = small_config();
    c.plants_per_class = 1;
    c.sessions = 6;
    const auto seqs = synthesize_sequences(c);
    AugmentPolicy policy;
    policy.noise_probability = 1.0;
    for (std::uint64_t s = 0; s < 20; ++s) {
        const AugmentedSequence a = augment_sequence(seqs[s % seqs.size()], policy, RngStream(9, s));
        ASSERT_EQ(a.frame_draws.size(), 6u);
        for (const GeometricDraw& d : a.frame_draws) EXPECT_EQ(d, a.frame_draws[0]);
        // Same stream, same draw.
        RngStream replay = RngStream(9, s);
        EXPECT_EQ(augment_sequence(seqs[s % seqs.size()], policy, replay).sequence.frames[3], a.sequence.frames[3]);
    }
}

TEST(Augment, DrawsStayWithinPolicyRanges) {
    AugmentPolicy p;
    RngStream rng(4, 0);
    int flips = 0;
    for (int i = 0; i < 2000; ++i) {
        const GeometricDraw d = draw_geometry(p, rng);
        EXPECT_LE(std::abs(d.rotation_degrees), p.rotation_degrees);
        EXPECT_LE(std::abs(d.shear_degrees), p.shear_degrees);
        EXPECT_LE(std::abs(d.translate_x), p.translation_pixels);
        EXPECT_LE(std::abs(d.translate_y), p.translation_pixels);
        flips += d.flip;
    }
    EXPECT_NEAR(flips, 1000, 120);
    p.flip_probability = 1.5;
    EXPECT_THROW(p.validate(), ValidationError);
}

TEST(Augment, NoiseSigmaIsFifteenPercentOfMaximum) {
    EXPECT_DOUBLE_EQ(noise_sigma_for(255.0), 38.25);
    EXPECT_DOUBLE_EQ(noise_sigma_for(1.0), 0.15);
    RngStream rng(5, 0);
    const Tensor img({3, 64, 64}, 0.5);
    const Tensor noisy = add_gaussian_noise(img, 0.15, rng);
    double sq = 0;
    for (std::size_t i = 0; i < img.size(); ++i) sq += (noisy[i] - 0.5) * (noisy[i] - 0.5);
    EXPECT_NEAR(std::sqrt(sq / static_cast<double>(img.size())), 0.15, 0.15 * 0.03);
    for (double v : noisy.values()) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
    }
}

TEST(Perturb, ChangesExactlyKFrames) {
    const ImageSequence seq = ramp_sequence(12);
    RngStream rng(6, 0);
    for (std::size_t k = 1; k <= 12; ++k) {
        const PerturbedSequence p = perturb_test_sequence(seq, k, rng);
        ASSERT_EQ(p.perturbed_frames.size(), k);
        EXPECT_TRUE(std::is_sorted(p.perturbed_frames.begin(), p.perturbed_frames.end()));
        std::size_t changed = 0;
        for (std::size_t t = 0; t < 12; ++t) changed += p.sequence.frames[t] != seq.frames[t];
        EXPECT_EQ(changed, k);
    }
    EXPECT_THROW(perturb_test_sequence(seq, 0, rng), ValidationError);
    EXPECT_THROW(perturb_test_sequence(seq, 13, rng), ValidationError);
}

TEST(Perturb, FrameSubsetsAreUniform) {
    // 10^4 draws of 3 frames out of 8: chi-square over the 56 subsets and over the 8 positions.
    const ImageSequence seq = ramp_sequence(8);
    RngStream rng(7, 0);
    const int trials = 10000;
    std::map<std::vector<std::size_t>, int> subsets;
    std::array<int, 8> positions{};
    for (int i = 0; i < trials; ++i) {
        const PerturbedSequence p = perturb_test_sequence(seq, 3, rng);
        ++subsets[p.perturbed_frames];
        for (std::size_t t : p.perturbed_frames) ++positions[t];
    }
    ASSERT_EQ(subsets.size(), 56u);
    double chi_subsets = 0.0;
    const double e_subset = trials / 56.0;
    for (const auto& [s, n] : subsets) chi_subsets += (n - e_subset) * (n - e_subset) / e_subset;
    double chi_positions = 0.0;
    const double e_pos = trials * 3.0 / 8.0;
    for (int n : positions) chi_positions += (n - e_pos) * (n - e_pos) / e_pos;
    // Upper 0.001 quantiles of chi-square with 55 and 7 degrees of freedom.
    EXPECT_LT(chi_subsets, 93.17);
    EXPECT_LT(chi_positions, 24.32);
}

TEST(Folds, StratifiedFiveFoldOnDefaultLabels) {
    const auto labels = labels_of(synthesize_sequences(small_config()));
    for (std::size_t repeat = 0; repeat < 3; ++repeat) {
        const FoldPlan plan = stratified_kfold(labels, 5, 42, repeat);
        std::set<std::size_t> seen;
        for (std::size_t f = 0; f < 5; ++f) {
            const auto test = plan.test_indices(f);
            const auto train = plan.train_indices(f);
            EXPECT_EQ(test.size() + train.size(), 120u);
            std::array<int, 3> per_class{};
            for (std::size_t i : test) {
                ++per_class[class_index(labels[i])];
                EXPECT_TRUE(seen.insert(i).second);
            }
            for (int n : per_class) EXPECT_EQ(n, 8);
        }
        EXPECT_EQ(seen.size(), 120u);
    }
    EXPECT_NE(stratified_kfold(labels, 5, 42, 0).fold_of, stratified_kfold(labels, 5, 42, 1).fold_of);
    EXPECT_EQ(stratified_kfold(labels, 5, 42, 0).fold_of, stratified_kfold(labels, 5, 42, 0).fold_of);
}

TEST(Folds, SingleFoldAndTooFewMembers) {
    const std::vector<StressClass> labels{StressClass::Control, StressClass::Control, StressClass::YoungSeedling};
    const FoldPlan one = stratified_kfold(labels, 1, 1, 0);
    for (std::size_t f : one.fold_of) EXPECT_EQ(f, 0u);
    EXPECT_THROW(stratified_kfold(labels, 2, 1, 0), ValidationError);
    EXPECT_THROW(stratified_kfold(labels, 0, 1, 0), ValidationError);
}

TEST(Folds, TwinGroupsStayTogetherAndFoldsStayStratified) {
    const auto seqs = synthesize_sequences(small_config());
    const auto labels = labels_of(seqs);
    const auto groups = twin_groups(seqs);
    EXPECT_EQ(std::set<std::size_t>(groups.begin(), groups.end()).size(), 40u);
    const FoldPlan plan = stratified_group_kfold(labels, groups, 5, 42, 0);
    std::map<std::size_t, std::size_t> fold_of_group;
    for (std::size_t i = 0; i < seqs.size(); ++i) {
        const auto [it, inserted] = fold_of_group.emplace(groups[i], plan.fold_of[i]);
        EXPECT_EQ(it->second, plan.fold_of[i]);
    }
    for (std::size_t f = 0; f < 5; ++f) {
        std::array<int, 3> per_class{};
        for (std::size_t i : plan.test_indices(f)) ++per_class[class_index(labels[i])];
        for (int n : per_class) EXPECT_EQ(n, 8);
    }
    EXPECT_THROW(stratified_group_kfold(labels, std::vector<std::size_t>(3, 0), 5, 42, 0), ValidationError);
}

TEST(Folds, TwinGroupsIgnoreIdsOutsideTheConvention) {
    std::vector<ImageSequence> seqs(3);
    seqs[0].plant_id = "C-p1";
    seqs[0].label = StressClass::Control;
    seqs[1].plant_id = "YS-p1";
    seqs[1].label = StressClass::YoungSeedling;
    seqs[2].plant_id = "p1";
    const auto g = twin_groups(seqs);
    EXPECT_EQ(g[0], g[1]);
    EXPECT_NE(g[0], g[2]);
}

TEST(Sessions, TruncationKeepsEarlySessions) {
    const ImageSequence seq = ramp_sequence(10);
    const ImageSequence t = truncate_sessions(seq, 4);
    EXPECT_EQ(t.length(), 4u);
    EXPECT_EQ(t.session_indices.back(), 4);
    EXPECT_EQ(t.frames[3], seq.frames[3]);
    EXPECT_THROW(truncate_sessions(seq, 0), ValidationError);
    EXPECT_THROW(truncate_sessions(seq, 33), ValidationError);
}

TEST(Sequence, ValidateCatchesInconsistency) {
    ImageSequence seq = ramp_sequence(3);
    seq.session_indices = {1, 3, 2};
    EXPECT_THROW(seq.validate(), ValidationError);
    seq = ramp_sequence(3);
    seq.session_indices.pop_back();
    EXPECT_THROW(seq.validate(), ValidationError);
}
