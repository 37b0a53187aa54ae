#pragma once

#include <array>
#include <cstddef>
#include <string_view>

namespace phenoseq {

/// Water-stress conditions, in the fixed confusion-matrix order.
enum class StressClass : std::size_t { BeforeFlowering = 0, Control = 1, YoungSeedling = 2 };

inline constexpr std::size_t kNumClasses = 3;
inline constexpr std::array<StressClass, kNumClasses> kAllClasses{
    StressClass::BeforeFlowering, StressClass::Control, StressClass::YoungSeedling};

std::string_view class_code(StressClass c);
/// Accepts "BF", "C" or "YS"; throws ValidationError otherwise.
StressClass parse_class(std::string_view code);
StressClass class_from_index(std::size_t index);

inline std::size_t class_index(StressClass c) { return static_cast<std::size_t>(c); }

}  // namespace phenoseq
