#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "aunerf/graph.hpp"
#include "aunerf/optim.hpp"

namespace aunerf {

struct CheckpointError : std::runtime_error {
    explicit CheckpointError(const std::string& msg) : std::runtime_error(msg) {}
};

// Versioned binary snapshot: magic, version, stage tag, iteration counter,
// RNG state, integer counters, then named tensors (little-endian shapes and
// 64-bit float data). save -> load -> save is byte-identical.
struct Checkpoint {
    uint32_t version = 1;
    std::string stage;
    uint64_t iteration = 0;
    std::array<uint64_t, 4> rng_state{};
    std::vector<std::pair<std::string, int64_t>> counters;
    std::vector<std::pair<std::string, Tensor>> tensors;

    void add_tensor(const std::string& name, const Tensor& t) { tensors.emplace_back(name, t); }
    const Tensor* find_tensor(const std::string& name) const;
    int64_t counter(const std::string& name, int64_t fallback = 0) const;
};

void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

// Snapshot helpers: parameters whose names start with any given prefix, plus
// one Adam state under "adam.<tag>.".
void pack_params(Checkpoint& ck, const Graph& g, const std::vector<std::string>& names);
void pack_adam(Checkpoint& ck, const std::string& tag, Adam& adam);
// Copies matching checkpoint tensors into graph parameters; every requested
// name must exist in the checkpoint.
void load_params(Graph& g, const Checkpoint& ck, const std::vector<std::string>& names);
void load_adam(const Checkpoint& ck, const std::string& tag, Adam& adam);

}  // namespace aunerf
