#pragma once

#include <filesystem>
#include <string>

#include "pslab/core/param_set.hpp"

namespace pslab {

// Parameter checkpoints are two files sharing a stem:
//   <stem>.bin   concatenated little-endian float64 values, row-major per tensor
//   <stem>.json  manifest {"format", "dtype", "total_bytes", "params": [{name, shape, offset, count}]}
void save_checkpoint(const ParamSet<double>& params, const std::filesystem::path& stem);
ParamSet<double> load_checkpoint(const std::filesystem::path& stem);

/// Copies every entry of `src` into `dst` with `prefix` prepended to its name.
void append_prefixed(ParamSet<double>& dst, const ParamSet<double>& src, const std::string& prefix);
/// Entries of `src` whose names start with `prefix`, with the prefix stripped.
ParamSet<double> extract_prefixed(const ParamSet<double>& src, const std::string& prefix);

}  // namespace pslab
