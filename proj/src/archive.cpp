#include "panet/io/archive.hpp"

#include <cstring>
#include <fstream>

namespace panet {

namespace {

constexpr char kMagic[8] = {'P', 'A', 'N', 'E', 'T', 'A', 'R', '1'};

template <typename T>
void write_raw(std::ofstream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::ifstream& is, const std::string& path) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw CheckpointError("archive '" + path + "' is truncated or corrupt");
    return v;
}

}  // namespace

void save_archive(const std::string& path, const Archive& ar) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw CheckpointError("cannot open '" + path + "' for writing");
    os.write(kMagic, sizeof(kMagic));
    const std::string meta = ar.meta.dump();
    write_raw<uint64_t>(os, meta.size());
    os.write(meta.data(), static_cast<std::streamsize>(meta.size()));
    write_raw<uint32_t>(os, static_cast<uint32_t>(ar.tensors.size()));
    for (const auto& [name, t] : ar.tensors) {
        write_raw<uint16_t>(os, static_cast<uint16_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_raw<uint8_t>(os, 0);  // dtype: float32
        write_raw<uint8_t>(os, static_cast<uint8_t>(t.rank()));
        for (int64_t d = 0; d < t.rank(); ++d) write_raw<uint64_t>(os, static_cast<uint64_t>(t.size(d)));
        os.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.numel() * sizeof(float)));
    }
    if (!os) throw CheckpointError("failed writing archive '" + path + "'");
}

Archive load_archive(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw CheckpointError("cannot open archive '" + path + "'");
    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw CheckpointError("'" + path + "' is not a panet archive");
    Archive ar;
    const uint64_t meta_len = read_raw<uint64_t>(is, path);
    std::string meta(meta_len, '\0');
    is.read(meta.data(), static_cast<std::streamsize>(meta_len));
    if (!is) throw CheckpointError("archive '" + path + "' is truncated");
    try {
        ar.meta = nlohmann::json::parse(meta);
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError("archive '" + path + "' has invalid metadata: " + e.what());
    }
    const uint32_t n = read_raw<uint32_t>(is, path);
    for (uint32_t i = 0; i < n; ++i) {
        const uint16_t name_len = read_raw<uint16_t>(is, path);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        const uint8_t dtype = read_raw<uint8_t>(is, path);
        if (dtype != 0) throw CheckpointError("archive '" + path + "' entry '" + name + "' has unsupported dtype");
        const uint8_t rank = read_raw<uint8_t>(is, path);
        Shape shape;
        for (uint8_t d = 0; d < rank; ++d) shape.push_back(static_cast<int64_t>(read_raw<uint64_t>(is, path)));
        FTensor t(shape);
        is.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.numel() * sizeof(float)));
        if (!is) throw CheckpointError("archive '" + path + "' is truncated in entry '" + name + "'");
        ar.tensors.emplace(std::move(name), std::move(t));
    }
    return ar;
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
    Archive ar;
    ar.meta["format"] = "panet-checkpoint";
    ar.meta["version"] = 1;
    ar.meta["config"] = ck.config;
    ar.meta["epoch"] = ck.epoch;
    ar.meta["step"] = ck.step;
    ar.meta["seed"] = ck.seed;
    ar.meta["best_metric"] = ck.best_metric;
    ar.meta["alpha"] = ck.alpha;
    for (const auto& [name, t] : ck.model_state) ar.tensors["model/" + name] = t;
    for (const auto& [name, t] : ck.optim_state) ar.tensors["optim/" + name] = t;
    save_archive(path, ar);
}

Checkpoint load_checkpoint(const std::string& path) {
    Archive ar = load_archive(path);
    if (ar.meta.value("format", "") != "panet-checkpoint")
        throw CheckpointError("'" + path + "' is not a panet checkpoint");
    Checkpoint ck;
    ck.config = ar.meta.value("config", nlohmann::json::object());
    ck.epoch = ar.meta.value("epoch", int64_t(0));
    ck.step = ar.meta.value("step", int64_t(0));
    ck.seed = ar.meta.value("seed", uint64_t(0));
    ck.best_metric = ar.meta.value("best_metric", -1.0);
    if (ar.meta.contains("alpha")) ck.alpha = ar.meta["alpha"].get<std::map<std::string, double>>();
    for (auto& [name, t] : ar.tensors) {
        if (name.rfind("model/", 0) == 0)
            ck.model_state[name.substr(6)] = t;
        else if (name.rfind("optim/", 0) == 0)
            ck.optim_state[name.substr(6)] = t;
    }
    return ck;
}

void save_encoder_weights(const Module<float>& encoder, const std::string& path) {
    Archive ar;
    ar.meta["format"] = "panet-encoder";
    ar.meta["version"] = 1;
    for (auto& [name, t] : encoder.state_dict()) ar.tensors[name] = t;
    save_archive(path, ar);
}

void load_pretrained_encoder(Module<float>& encoder, const std::string& path, int64_t in_channels) {
    Archive ar = load_archive(path);
    if (ar.meta.value("format", "") != "panet-encoder")
        throw CheckpointError("'" + path + "' is not an encoder weights archive");
    std::map<std::string, FTensor> sd = std::move(ar.tensors);
    const auto stem = sd.find("stem.conv.weight");
    if (stem == sd.end()) throw CheckpointError("encoder weights '" + path + "' lack stem.conv.weight");
    const Shape ss = stem->second.shape();
    if (ss.size() != 4) throw CheckpointError("encoder weights '" + path + "' stem has unexpected rank");
    if (ss[1] != in_channels) {
        // Channel adaptation: sum the archive kernels into channel 0, zero the
        // rest. Summing preserves the response on replicated-channel images.
        FTensor adapted({ss[0], in_channels, ss[2], ss[3]});
        const int64_t k = ss[2] * ss[3];
        for (int64_t o = 0; o < ss[0]; ++o)
            for (int64_t c = 0; c < ss[1]; ++c)
                for (int64_t i = 0; i < k; ++i)
                    adapted[(o * in_channels) * k + i] += stem->second[(o * ss[1] + c) * k + i];
        sd["stem.conv.weight"] = adapted;
    }
    try {
        encoder.load_state_dict(sd, true);
    } catch (const CheckpointError& e) {
        throw CheckpointError("pretrained weights '" + path + "' do not match the 2D encoder layout: " + e.what());
    }
}

}  // namespace panet
