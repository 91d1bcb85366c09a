#pragma once

#include <string>

#include "mow/mow_optimizer.hpp"

namespace mow {

// On-disk training snapshot. Binary layout: magic "MOW1", u32 version,
// then length-prefixed sections; all integers and f64 payloads little-endian.
struct Checkpoint {
    NetSpec net;
    MowConfig mow;
    MowState state;
    Rng queue_rng;
    int64_t queue_draws = 0;
    uint64_t config_digest = 0;
};

inline constexpr uint32_t kCheckpointVersion = 1;

// Writes to a temp file in the same directory and renames, so a reader never
// observes a partially written checkpoint at `path`.
void save_checkpoint(const std::string& path, const Checkpoint& ck);

Checkpoint load_checkpoint(const std::string& path);

}  // namespace mow
