#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pvrnn/model.h"

namespace pvrnn {

struct HistoryRow {
    std::uint64_t epoch = 0;
    double likelihood = 0.0;
    double kl = 0.0;
    double total = 0.0;

    bool operator==(const HistoryRow&) const = default;
};

struct Checkpoint {
    NetworkConfig network;
    Parameters params;
    std::vector<AdaptiveVectors> adaptive;  // one per training sequence (PV-RNN only)
    AdamState adam;
    std::uint64_t epoch = 0;
    double w = 0.0;
    std::uint64_t seed = 0;
    std::string provenance;
    std::vector<HistoryRow> history;
};

bool operator==(const Checkpoint& a, const Checkpoint& b);

/// Binary container, all integers and reals little-endian:
///   8 bytes  magic "PVRNNCKP"
///   u32      format version
///   u64      header length n
///   n bytes  JSON header (config, counters, ADAM settings, block table)
///   payload  f64 blocks in block-table order
constexpr std::uint32_t kCheckpointVersion = 1;

void checkpoint_save(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint checkpoint_load(const std::filesystem::path& path);

std::string sha256_hex(std::span<const unsigned char> bytes);
std::string sha256_hex(const std::string& text);
std::string file_sha256(const std::filesystem::path& path);
// Digest of the raw bits of every parameter block, in block order.
std::string parameters_hash(const Parameters& params);

}  // namespace pvrnn
