// checkpoint.hpp: binary snapshots of a running simulation.
//
// Layout (native endianness): "VBSPCHK\0", u32 version, u64 config hash,
// then the SimulationState fields in declaration order.

#pragma once

#include "vbspin/dynamics.hpp"

#include <cstdint>
#include <filesystem>

namespace vbspin {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    std::uint64_t config_hash = 0;
    SimulationState state;
};

/// Written to `<path>.tmp` and renamed into place.
void save_checkpoint(const std::filesystem::path& path, const SimulationState& state, std::uint64_t config_hash);

/// Throws ConfigError on a missing file, bad magic, version or truncation.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace vbspin
