#include "diffsens/path_io.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "diffsens/errors.hpp"

namespace diffsens {

static_assert(std::endian::native == std::endian::little, "path artifacts are written little-endian");

namespace {

constexpr std::array<char, 8> kMagic = {'D', 'S', 'P', 'A', 'T', 'H', '\0', '\1'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put(std::ofstream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
T get(std::ifstream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw Error("truncated path artifact");
  return value;
}

void write_batches(std::ofstream& out, const std::vector<Batch>& batches) {
  for (const Batch& b : batches) {
    out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size() * sizeof(double)));
  }
}

std::vector<Batch> read_batches(std::ifstream& in, std::uint64_t count, Eigen::Index rows, Eigen::Index cols) {
  std::vector<Batch> out;
  out.reserve(count);
  for (std::uint64_t k = 0; k < count; ++k) {
    Batch b(rows, cols);
    in.read(reinterpret_cast<char*>(b.data()), static_cast<std::streamsize>(b.size() * sizeof(double)));
    if (!in) throw Error("truncated path artifact payload");
    out.push_back(std::move(b));
  }
  return out;
}

void write_artifact(const std::filesystem::path& file, PathKind kind, const IntegrationGrid& grid,
                    std::uint64_t stride, std::uint64_t seed, const std::vector<Batch>& states,
                    const std::vector<Batch>& noise) {
  if (states.empty()) throw UsageError("cannot write an empty path");
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + file.string() + " for writing");
  out.write(kMagic.data(), kMagic.size());
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(kind));
  put<std::uint64_t>(out, states.size());
  put<std::uint64_t>(out, static_cast<std::uint64_t>(states.front().rows()));
  put<std::uint64_t>(out, static_cast<std::uint64_t>(states.front().cols()));
  put<std::uint64_t>(out, noise.size());
  put<std::uint64_t>(out, grid.n_steps);
  put<std::uint64_t>(out, stride);
  put<std::uint64_t>(out, seed);
  put<double>(out, grid.s_start);
  put<double>(out, grid.s_end);
  put<double>(out, grid.dt);
  write_batches(out, states);
  write_batches(out, noise);
  if (!out) throw Error("failed writing " + file.string());
}

}  // namespace

void write_path(const SamplePath& path, const std::filesystem::path& file) {
  write_artifact(file, path.kind, path.grid, path.stride, path.seed, path.states, path.noise);
}

void write_sensitivity(const SensitivityPath& path, const std::filesystem::path& file) {
  write_artifact(file, PathKind::sensitivity, path.grid, 1, 0, path.psi, {});
}

SamplePath read_path(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw Error("cannot open " + file.string());
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw Error(file.string() + " is not a path artifact");
  if (get<std::uint32_t>(in) != kVersion) throw Error("unsupported path artifact version");
  const auto kind = get<std::uint32_t>(in);
  if (kind > 2) throw Error("unknown path kind in artifact");
  SamplePath path;
  path.kind = static_cast<PathKind>(kind);
  const auto n_states = get<std::uint64_t>(in);
  const auto rows = static_cast<Eigen::Index>(get<std::uint64_t>(in));
  const auto cols = static_cast<Eigen::Index>(get<std::uint64_t>(in));
  const auto n_noise = get<std::uint64_t>(in);
  path.grid.n_steps = get<std::uint64_t>(in);
  path.stride = get<std::uint64_t>(in);
  path.seed = get<std::uint64_t>(in);
  path.grid.s_start = get<double>(in);
  path.grid.s_end = get<double>(in);
  path.grid.dt = get<double>(in);
  if (n_states == 0) throw Error("path artifact without states");
  path.states = read_batches(in, n_states, rows, cols);
  path.noise = read_batches(in, n_noise, rows, cols);
  return path;
}

}  // namespace diffsens
