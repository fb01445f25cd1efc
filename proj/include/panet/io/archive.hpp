#pragma once

#include <map>
#include <string>

#include "json.hpp"
#include "panet/core/tensor.hpp"
#include "panet/nn/module.hpp"

namespace panet {

// Single-file tensor archive: a JSON metadata block followed by named float32
// tensors. Used for checkpoints and pretrained encoder weights; the byte
// layout is documented in the README.
struct Archive {
    nlohmann::json meta;
    std::map<std::string, FTensor> tensors;
};

void save_archive(const std::string& path, const Archive& ar);
Archive load_archive(const std::string& path);

// Model + optimizer snapshot. Tensor keys: "model/<name>" for parameters and
// buffers, "optim/<name>.m" and "optim/<name>.v" for Adam moments.
struct Checkpoint {
    nlohmann::json config;           // TrainConfig as written in the config file
    int64_t epoch = 0;
    int64_t step = 0;
    uint64_t seed = 0;
    double best_metric = -1.0;
    std::map<std::string, FTensor> model_state;
    std::map<std::string, FTensor> optim_state;
    std::map<std::string, double> alpha;  // skip-fusion magnitudes, for reporting
};

void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

// Reads an encoder-weights archive into `encoder` (names are unprefixed
// encoder parameter names). When the archive stem has more input channels
// than the model (e.g. pretrained RGB weights for a grayscale model), the
// stem kernels are summed over the archive's channel axis into channel 0 and
// any remaining model channels are zeroed. Every other entry must match the
// model layout exactly.
void load_pretrained_encoder(Module<float>& encoder, const std::string& path, int64_t in_channels);

// Exports an encoder's parameters and buffers as a weights archive.
void save_encoder_weights(const Module<float>& encoder, const std::string& path);

}  // namespace panet
