#include "aunerf/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace aunerf {

namespace {

constexpr char kMagic[4] = {'A', 'U', 'N', 'F'};

template <typename T>
void put(std::ofstream& f, T v) {
    f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& f) {
    T v{};
    f.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!f) throw CheckpointError("checkpoint truncated");
    return v;
}

void put_string(std::ofstream& f, const std::string& s) {
    put<uint32_t>(f, (uint32_t)s.size());
    f.write(s.data(), (std::streamsize)s.size());
}

std::string get_string(std::ifstream& f) {
    uint32_t n = get<uint32_t>(f);
    if (n > (1u << 20)) throw CheckpointError("checkpoint corrupt (oversized string)");
    std::string s((size_t)n, '\0');
    f.read(s.data(), n);
    if (!f) throw CheckpointError("checkpoint truncated");
    return s;
}

}  // namespace

const Tensor* Checkpoint::find_tensor(const std::string& name) const {
    for (const auto& [n, t] : tensors)
        if (n == name) return &t;
    return nullptr;
}

int64_t Checkpoint::counter(const std::string& name, int64_t fallback) const {
    for (const auto& [n, v] : counters)
        if (n == name) return v;
    return fallback;
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw CheckpointError("cannot open '" + path + "' for writing");
    f.write(kMagic, 4);
    put<uint32_t>(f, ck.version);
    put_string(f, ck.stage);
    put<uint64_t>(f, ck.iteration);
    for (uint64_t w : ck.rng_state) put<uint64_t>(f, w);
    put<uint32_t>(f, (uint32_t)ck.counters.size());
    for (const auto& [name, v] : ck.counters) {
        put_string(f, name);
        put<int64_t>(f, v);
    }
    put<uint32_t>(f, (uint32_t)ck.tensors.size());
    for (const auto& [name, t] : ck.tensors) {
        put_string(f, name);
        put<uint32_t>(f, (uint32_t)t.shape.size());
        for (int64_t d : t.shape) put<int64_t>(f, d);
        f.write(reinterpret_cast<const char*>(t.data.data()),
                (std::streamsize)(t.data.size() * sizeof(double)));
    }
    if (!f) throw CheckpointError("write failed for '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw CheckpointError("cannot open checkpoint '" + path + "'");
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, kMagic, 4) != 0)
        throw CheckpointError("'" + path + "' is not a checkpoint (bad magic)");
    Checkpoint ck;
    ck.version = get<uint32_t>(f);
    if (ck.version != 1)
        throw CheckpointError("unsupported checkpoint version " + std::to_string(ck.version) +
                              " in '" + path + "'");
    ck.stage = get_string(f);
    ck.iteration = get<uint64_t>(f);
    for (auto& w : ck.rng_state) w = get<uint64_t>(f);
    const uint32_t ncounters = get<uint32_t>(f);
    for (uint32_t i = 0; i < ncounters; ++i) {
        std::string name = get_string(f);
        ck.counters.emplace_back(std::move(name), get<int64_t>(f));
    }
    const uint32_t ntensors = get<uint32_t>(f);
    for (uint32_t i = 0; i < ntensors; ++i) {
        std::string name = get_string(f);
        const uint32_t ndim = get<uint32_t>(f);
        if (ndim > 8) throw CheckpointError("checkpoint corrupt (rank > 8)");
        Shape shape((size_t)ndim);
        for (auto& d : shape) d = get<int64_t>(f);
        Tensor t(shape);
        f.read(reinterpret_cast<char*>(t.data.data()),
               (std::streamsize)(t.data.size() * sizeof(double)));
        if (!f) throw CheckpointError("checkpoint truncated in tensor '" + name + "'");
        ck.tensors.emplace_back(std::move(name), std::move(t));
    }
    return ck;
}

void pack_params(Checkpoint& ck, const Graph& g, const std::vector<std::string>& names) {
    for (const auto& name : names) ck.add_tensor(name, g.param_value(name));
}

void pack_adam(Checkpoint& ck, const std::string& tag, Adam& adam) {
    ck.counters.emplace_back("adam." + tag + ".t", adam.steps());
    for (const auto& [name, t] : adam.first_moments())
        ck.add_tensor("adam." + tag + ".m." + name, t);
    for (const auto& [name, t] : adam.second_moments())
        ck.add_tensor("adam." + tag + ".v." + name, t);
}

void load_params(Graph& g, const Checkpoint& ck, const std::vector<std::string>& names) {
    for (const auto& name : names) {
        const Tensor* t = ck.find_tensor(name);
        if (!t) throw CheckpointError("checkpoint is missing tensor '" + name + "'");
        Tensor& dst = g.param_value(name);
        if (dst.shape != t->shape)
            throw CheckpointError("checkpoint tensor '" + name + "' has shape " +
                                  shape_str(t->shape) + ", expected " + shape_str(dst.shape));
        dst = *t;
    }
}

void load_adam(const Checkpoint& ck, const std::string& tag, Adam& adam) {
    adam.set_steps(ck.counter("adam." + tag + ".t"));
    const std::string mp = "adam." + tag + ".m.", vp = "adam." + tag + ".v.";
    for (const auto& [name, t] : ck.tensors) {
        if (name.rfind(mp, 0) == 0) adam.first_moments()[name.substr(mp.size())] = t;
        if (name.rfind(vp, 0) == 0) adam.second_moments()[name.substr(vp.size())] = t;
    }
}

}  // namespace aunerf
