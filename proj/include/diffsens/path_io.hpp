#pragma once

#include <filesystem>

#include "diffsens/dynamics.hpp"
#include "diffsens/sensitivity.hpp"

namespace diffsens {

// Binary path artifact, little-endian. Layout (docs/path_format.md):
//
//   char[8]  magic "DSPATH\0\1"
//   u32      version (1)
//   u32      kind (0 ode, 1 sde, 2 sensitivity)
//   u64      n_states, batch, dim, n_noise, n_steps, stride, seed
//   f64      s_start, s_end, dt
//   f64[n_states * batch * dim]  states, each batch row-major
//   f64[n_noise * batch * dim]   Wiener increments, same layout
void write_path(const SamplePath& path, const std::filesystem::path& file);
SamplePath read_path(const std::filesystem::path& file);

// Sensitivity paths use the same layout with kind = 2, stride 1 and no noise.
void write_sensitivity(const SensitivityPath& path, const std::filesystem::path& file);

}  // namespace diffsens
