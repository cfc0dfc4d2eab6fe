#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <stdexcept>

#include "diffgate/diff_subnetwork.hpp"

namespace diffgate {

using ConfigHash = std::array<std::uint8_t, 32>;

struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
// Config-hash mismatch between a file and the model it is applied to.
struct IncompatibleError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Sparse mask file (magic "DGM1"): little-endian; header = magic, format
// version u32, config hash (32 bytes), group count u32; per group: name
// length u32 + UTF-8 name, entry count u64, entries of (u64 flat index,
// f64 surviving w value). Only frozen subnetworks can be saved.
void save_mask(const DiffSubnetwork& net, const std::filesystem::path& path,
               const ConfigHash& config_hash);

// Rebuilds a frozen subnetwork; shapes come from the matching pretrained
// store. Throws IncompatibleError unless the stored hash equals
// expected_hash (skipped when expected_hash is nullptr).
DiffSubnetwork load_mask(const std::filesystem::path& path, const ParamGroups& shapes,
                         const ConfigHash* expected_hash);

// Dense checkpoint (magic "DGC1"): same envelope; per group: name, rank u32,
// dims u64..., full f64 array.
void save_checkpoint(const ParamGroups& params, const std::filesystem::path& path,
                     const ConfigHash& config_hash);
ParamGroups load_checkpoint(const std::filesystem::path& path,
                            const ConfigHash* expected_hash);
ConfigHash checkpoint_hash(const std::filesystem::path& path);

std::string hash_hex(const ConfigHash& h);

}  // namespace diffgate
