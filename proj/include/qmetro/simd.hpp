#pragma once

// Runtime instruction-set selection for the lane kernels.
//
// The scalar kernels are the reference. Vector variants perform the same
// floating-point operations in the same order (no FMA contraction), so every
// variant produces bit-identical results and the choice only affects speed.

#include <optional>
#include <string_view>

namespace qmetro::simd {

enum class Isa { scalar, avx2 };

std::string_view isa_name(Isa isa);
std::optional<Isa> parse_isa(std::string_view name);

/// Best variant the running CPU and this build support.
Isa detected_isa();

/// Variant used by the dispatching entry points: an explicit override, else
/// the QMETRO_ISA environment variable (scalar|avx2), else detected_isa().
Isa active_isa();

/// Pins (or with nullopt, releases) the dispatch choice. An override the CPU
/// cannot run falls back to scalar.
void set_isa_override(std::optional<Isa> isa);

bool isa_available(Isa isa);

}  // namespace qmetro::simd
