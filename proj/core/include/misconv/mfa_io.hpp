#pragma once

#include <filesystem>
#include <iosfwd>

#include "misconv/mfa.hpp"

namespace misconv {

// "MFA1" container, little-endian:
//   magic "MFA1", u32 n, u32 l, u32 k,
//   k x { f64 weight; n f64 mu; n*l f64 A (column-major); n f64 d }

void write_model(std::ostream& out, const MFAModel& model);
void save_model(const std::filesystem::path& path, const MFAModel& model);

/// Validates magic, dimensions and that weights sum to 1 within 1e-9, then
/// renormalizes the weights exactly.
MFAModel read_model(std::istream& in);
MFAModel load_model(const std::filesystem::path& path);

}  // namespace misconv
