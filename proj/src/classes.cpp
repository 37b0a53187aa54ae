#include "phenoseq/classes.hpp"

#include <string>

#include "phenoseq/tensor.hpp"

namespace phenoseq {

std::string_view class_code(StressClass c) {
    switch (c) {
        case StressClass::BeforeFlowering: return "BF";
        case StressClass::Control: return "C";
        case StressClass::YoungSeedling: return "YS";
    }
    return "?";
}

StressClass parse_class(std::string_view code) {
    for (StressClass c : kAllClasses) {
        if (class_code(c) == code) return c;
    }
    throw ValidationError("unknown class '" + std::string(code) + "' (expected BF, C or YS)");
}

StressClass class_from_index(std::size_t index) {
    if (index >= kNumClasses) throw ValidationError("class index " + std::to_string(index) + " out of range");
    return kAllClasses[index];
}

}  // namespace phenoseq
