#include <algorithm>
#include <array>
#include <map>
#include <string>

#include "phenoseq/data.hpp"

namespace phenoseq {

std::vector<std::size_t> FoldPlan::test_indices(std::size_t fold) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < fold_of.size(); ++i) {
        if (fold_of[i] == fold) out.push_back(i);
    }
    return out;
}

std::vector<std::size_t> FoldPlan::train_indices(std::size_t fold) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < fold_of.size(); ++i) {
        if (fold_of[i] != fold) out.push_back(i);
    }
    return out;
}

FoldPlan stratified_kfold(const std::vector<StressClass>& labels, std::size_t k, std::uint64_t seed,
                          std::size_t repeat) {
    if (k < 1) throw ValidationError("stratified_kfold: k must be >= 1");
    std::array<std::vector<std::size_t>, kNumClasses> members;
    for (std::size_t i = 0; i < labels.size(); ++i) members[class_index(labels[i])].push_back(i);
    for (StressClass c : kAllClasses) {
        const auto& m = members[class_index(c)];
        if (!m.empty() && m.size() < k) {
            throw ValidationError("stratified_kfold: class " + std::string(class_code(c)) + " has " +
                                  std::to_string(m.size()) + " members, fewer than k=" + std::to_string(k));
        }
    }

    FoldPlan plan;
    plan.k = k;
    plan.repeat = repeat;
    plan.fold_of.assign(labels.size(), 0);
    const RngStream root = RngStream(seed, hash_key("stratified_kfold")).substream(static_cast<std::uint64_t>(repeat));
    // Dealing continues across classes so fold totals also stay within one of each other.
    std::size_t dealt = 0;
    for (StressClass c : kAllClasses) {
        std::vector<std::size_t> m = members[class_index(c)];
        RngStream rng = root.substream(static_cast<std::uint64_t>(class_index(c)));
        for (std::size_t i = m.size(); i > 1; --i) {
            std::swap(m[i - 1], m[static_cast<std::size_t>(rng.below(i))]);
        }
        for (std::size_t idx : m) plan.fold_of[idx] = dealt++ % k;
    }
    return plan;
}

FoldPlan stratified_group_kfold(const std::vector<StressClass>& labels, const std::vector<std::size_t>& groups,
                                std::size_t k, std::uint64_t seed, std::size_t repeat) {
    if (k < 1) throw ValidationError("stratified_group_kfold: k must be >= 1");
    if (groups.size() != labels.size()) throw ValidationError("stratified_group_kfold: one group id per label required");
    using Profile = std::array<std::size_t, kNumClasses>;
    std::map<std::size_t, std::vector<std::size_t>> members;
    Profile class_totals{};
    for (std::size_t i = 0; i < labels.size(); ++i) {
        members[groups[i]].push_back(i);
        ++class_totals[class_index(labels[i])];
    }
    for (StressClass c : kAllClasses) {
        const std::size_t n = class_totals[class_index(c)];
        if (n != 0 && n < k) {
            throw ValidationError("stratified_group_kfold: class " + std::string(class_code(c)) + " has " +
                                  std::to_string(n) + " members, fewer than k=" + std::to_string(k));
        }
    }

    std::vector<std::pair<Profile, const std::vector<std::size_t>*>> order;
    for (const auto& [id, m] : members) {
        Profile profile{};
        for (std::size_t i : m) ++profile[class_index(labels[i])];
        order.emplace_back(profile, &m);
    }
    RngStream rng = RngStream(seed, hash_key("stratified_group_kfold")).substream(static_cast<std::uint64_t>(repeat));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[static_cast<std::size_t>(rng.below(i))]);
    std::stable_sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
        return a.second->size() > b.second->size();
    });

    FoldPlan plan;
    plan.k = k;
    plan.repeat = repeat;
    plan.fold_of.assign(labels.size(), 0);
    std::vector<Profile> counts(k, Profile{});
    std::vector<std::size_t> totals(k, 0);
    std::size_t cursor = 0;
    for (const auto& [profile, m] : order) {
        std::size_t best = k;
        std::size_t best_peak = 0;
        for (std::size_t step = 0; step < k; ++step) {
            const std::size_t f = (cursor + step) % k;
            std::size_t peak = 0;
            for (std::size_t c = 0; c < kNumClasses; ++c) {
                if (profile[c] > 0) peak = std::max(peak, counts[f][c] + profile[c]);
            }
            if (best == k || peak < best_peak || (peak == best_peak && totals[f] < totals[best])) {
                best = f;
                best_peak = peak;
            }
        }
        for (std::size_t i : *m) plan.fold_of[i] = best;
        for (std::size_t c = 0; c < kNumClasses; ++c) counts[best][c] += profile[c];
        totals[best] += m->size();
        cursor = (best + 1) % k;
    }
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        std::size_t lo = counts[0][c], hi = counts[0][c];
        for (const Profile& p : counts) {
            lo = std::min(lo, p[c]);
            hi = std::max(hi, p[c]);
        }
        if (hi - lo > 1) {
            throw ValidationError("stratified_group_kfold: groups do not allow a stratified split for class " +
                                  std::string(class_code(class_from_index(c))));
        }
    }
    return plan;
}

std::vector<std::size_t> twin_groups(const std::vector<ImageSequence>& sequences) {
    std::map<std::string, std::size_t> ids;
    std::vector<std::size_t> out;
    out.reserve(sequences.size());
    for (const ImageSequence& seq : sequences) {
        const std::string prefix = std::string(class_code(seq.label)) + "-";
        std::string plant = seq.plant_id;
        if (plant.starts_with(prefix)) {
            plant = plant.substr(prefix.size());
        } else {
            plant = "\x1f" + plant;  // keeps ids outside the convention apart from twin keys
        }
        const std::string key = seq.species + "\x1f" + plant + "\x1f" + std::to_string(seq.angle_index);
        out.push_back(ids.try_emplace(key, ids.size()).first->second);
    }
    return out;
}

}  // namespace phenoseq
