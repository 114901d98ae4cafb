#pragma once

#include <array>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "neuroink/common.hpp"
#include "neuroink/core.hpp"
#include "neuroink/image.hpp"

namespace neuroink {

// ---------------------------------------------------------------------------
// ResNet50 v1.5 (stride-2 placed on the 3x3 conv of each downsampling
// bottleneck) with a 2048 -> hidden -> 2 head.
// ---------------------------------------------------------------------------

namespace nn {

inline torch::nn::Conv2d conv1x1(int in, int out, int stride = 1) {
    return torch::nn::Conv2d(
        torch::nn::Conv2dOptions(in, out, 1).stride(stride).bias(false));
}

inline torch::nn::Conv2d conv3x3(int in, int out, int stride = 1) {
    return torch::nn::Conv2d(
        torch::nn::Conv2dOptions(in, out, 3).stride(stride).padding(1).bias(false));
}

struct BottleneckImpl : torch::nn::Module {
    static constexpr int expansion = 4;

    BottleneckImpl(int inplanes, int planes, int stride = 1, bool downsample = false) {
        conv1 = register_module("conv1", conv1x1(inplanes, planes));
        bn1 = register_module("bn1", torch::nn::BatchNorm2d(planes));
        conv2 = register_module("conv2", conv3x3(planes, planes, stride));  // v1.5
        bn2 = register_module("bn2", torch::nn::BatchNorm2d(planes));
        conv3 = register_module("conv3", conv1x1(planes, planes * expansion));
        bn3 = register_module("bn3", torch::nn::BatchNorm2d(planes * expansion));
        if (downsample) {
            down_conv = register_module("down_conv",
                                        conv1x1(inplanes, planes * expansion, stride));
            down_bn = register_module("down_bn",
                                      torch::nn::BatchNorm2d(planes * expansion));
        }
    }

    torch::Tensor forward(torch::Tensor x) {
        auto identity = x;
        auto out = torch::relu(bn1(conv1(x)));
        out = torch::relu(bn2(conv2(out)));
        out = bn3(conv3(out));
        if (down_conv) identity = down_bn(down_conv(x));
        return torch::relu(out + identity);
    }

    torch::nn::Conv2d conv1{nullptr}, conv2{nullptr}, conv3{nullptr},
        down_conv{nullptr};
    torch::nn::BatchNorm2d bn1{nullptr}, bn2{nullptr}, bn3{nullptr}, down_bn{nullptr};
};
TORCH_MODULE(Bottleneck);

struct ResNet50Impl : torch::nn::Module {
    ResNet50Impl() {
        conv1 = register_module(
            "conv1", torch::nn::Conv2d(
                         torch::nn::Conv2dOptions(3, 64, 7).stride(2).padding(3).bias(false)));
        bn1 = register_module("bn1", torch::nn::BatchNorm2d(64));
        maxpool = register_module(
            "maxpool", torch::nn::MaxPool2d(
                           torch::nn::MaxPool2dOptions(3).stride(2).padding(1)));
        layer1 = register_module("layer1", make_layer(64, 64, 3, 1));
        layer2 = register_module("layer2", make_layer(256, 128, 4, 2));
        layer3 = register_module("layer3", make_layer(512, 256, 6, 2));
        layer4 = register_module("layer4", make_layer(1024, 512, 3, 2));
        avgpool = register_module(
            "avgpool", torch::nn::AdaptiveAvgPool2d(
                           torch::nn::AdaptiveAvgPool2dOptions({1, 1})));
    }

    torch::nn::Sequential make_layer(int inplanes, int planes, int blocks, int stride) {
        torch::nn::Sequential layer;
        layer->push_back(Bottleneck(inplanes, planes, stride,
                                    stride != 1 || inplanes != planes * 4));
        for (int i = 1; i < blocks; ++i) layer->push_back(Bottleneck(planes * 4, planes));
        return layer;
    }

    // 2048-d pooled features
    torch::Tensor forward(torch::Tensor x) {
        x = torch::relu(bn1(conv1(x)));
        x = maxpool(x);
        x = layer1->forward(x);
        x = layer2->forward(x);
        x = layer3->forward(x);
        x = layer4->forward(x);
        x = avgpool(x);
        return x.flatten(1);
    }

    torch::nn::Conv2d conv1{nullptr};
    torch::nn::BatchNorm2d bn1{nullptr};
    torch::nn::MaxPool2d maxpool{nullptr};
    torch::nn::Sequential layer1{nullptr}, layer2{nullptr}, layer3{nullptr},
        layer4{nullptr};
    torch::nn::AdaptiveAvgPool2d avgpool{nullptr};
};
TORCH_MODULE(ResNet50);

struct ClassifierImpl : torch::nn::Module {
    explicit ClassifierImpl(int hidden_dim = 256) {
        backbone = register_module("backbone", ResNet50());
        fc1 = register_module("fc1", torch::nn::Linear(2048, hidden_dim));
        fc2 = register_module("fc2", torch::nn::Linear(hidden_dim, 2));
    }

    torch::Tensor forward(torch::Tensor x) { return head(backbone(x)); }

    torch::Tensor head(torch::Tensor features) {
        return fc2(torch::relu(fc1(features)));
    }

    ResNet50 backbone{nullptr};
    torch::nn::Linear fc1{nullptr}, fc2{nullptr};
};

}  // namespace nn

struct Classifier : torch::nn::ModuleHolder<nn::ClassifierImpl> {
    using torch::nn::ModuleHolder<nn::ClassifierImpl>::ModuleHolder;
};

struct ClassifierConfig {
    int hidden_dim = 256;
    // Path to a backbone weights archive (see save_backbone_weights). Empty
    // means a seeded random initialization; ImageNet-1k weights are supplied
    // by the user via --weights / NEUROINK_WEIGHTS.
    std::string pretrained_weights;
    std::uint64_t init_seed = 0;

    std::string digest() const {
        std::ostringstream ss;
        ss << "classifier|resnet50-v1.5|hidden=" << hidden_dim
           << "|weights=" << pretrained_weights << "|seed=" << init_seed;
        return fnv1a_digest(ss.str());
    }
};

// ImageNet normalization statistics of the pretrained backbone.
inline const std::array<double, 3> kChannelMean = {0.485, 0.456, 0.406};
inline const std::array<double, 3> kChannelStd = {0.229, 0.224, 0.225};

// Grayscale -> replicated 3-channel, normalized, NCHW float32.
inline torch::Tensor to_input_tensor(const std::vector<const GrayImage*>& images) {
    if (images.empty()) throw Error::data("EmptySplit", "no images in batch");
    const int h = images[0]->height, w = images[0]->width;
    auto t = torch::empty({static_cast<long>(images.size()), 3, h, w}, torch::kFloat32);
    auto acc = t.accessor<float, 4>();
    for (std::size_t i = 0; i < images.size(); ++i) {
        const auto& img = *images[i];
        if (img.width != w || img.height != h)
            throw Error::data("ShapeError", "mixed image sizes in batch");
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const float g = img.at(x, y) / 255.0f;
                for (int c = 0; c < 3; ++c)
                    acc[i][c][y][x] =
                        (g - static_cast<float>(kChannelMean[c])) /
                        static_cast<float>(kChannelStd[c]);
            }
    }
    return t;
}

inline torch::Tensor to_input_tensor(const std::vector<GrayImage>& images) {
    std::vector<const GrayImage*> ptrs;
    ptrs.reserve(images.size());
    for (const auto& img : images) ptrs.push_back(&img);
    return to_input_tensor(ptrs);
}

// ---------------------------------------------------------------------------
// Weights archives: flat named-tensor files for the backbone and for full
// checkpoints.
// ---------------------------------------------------------------------------

inline void save_named_tensors(const torch::nn::Module& module,
                               const std::filesystem::path& path) {
    torch::serialize::OutputArchive archive;
    for (const auto& p : module.named_parameters()) archive.write(p.key(), p.value());
    for (const auto& b : module.named_buffers())
        archive.write(b.key(), b.value(), /*is_buffer=*/true);
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    archive.save_to(path.string());
}

inline void load_named_tensors(torch::nn::Module& module,
                               const std::filesystem::path& path) {
    if (!std::filesystem::exists(path))
        throw Error::data("MissingWeights", path.string());
    torch::serialize::InputArchive archive;
    try {
        archive.load_from(path.string());
    } catch (const c10::Error& e) {
        throw Error::data("MissingWeights",
                          path.string() + ": unreadable archive (" + e.what_without_backtrace() + ")");
    }
    torch::NoGradGuard no_grad;
    auto load_one = [&](const std::string& key, torch::Tensor dst, bool is_buffer) {
        torch::Tensor src;
        try {
            archive.read(key, src, is_buffer);
        } catch (const c10::Error&) {
            throw Error::data("MissingWeights", path.string() + ": missing tensor '" + key + "'");
        }
        if (src.sizes() != dst.sizes())
            throw Error::data("WeightShapeMismatch",
                              key + ": archive " + c10::str(src.sizes()) + " vs model " +
                                  c10::str(dst.sizes()));
        dst.copy_(src);
    };
    for (const auto& p : module.named_parameters()) load_one(p.key(), p.value(), false);
    for (const auto& b : module.named_buffers()) load_one(b.key(), b.value(), true);
}

inline void save_backbone_weights(const Classifier& model,
                                  const std::filesystem::path& path) {
    save_named_tensors(*model->backbone, path);
}

// Backbone weights loaded (or seeded), head freshly initialized with the
// default uniform fan-in scheme. All parameters trainable.
inline Classifier build_classifier(const ClassifierConfig& cfg) {
    torch::manual_seed(cfg.init_seed);
    Classifier model(cfg.hidden_dim);
    if (!cfg.pretrained_weights.empty())
        load_named_tensors(*model->backbone, cfg.pretrained_weights);
    return model;
}

inline std::size_t parameter_count(const Classifier& model) {
    std::size_t n = 0;
    for (const auto& p : model->parameters()) n += p.numel();
    return n;
}

// Softmax class probabilities, eval mode, no autograd.
inline torch::Tensor predict(Classifier& model, const torch::Tensor& batch) {
    if (batch.dim() != 4 || batch.size(1) != 3)
        throw Error::data("ShapeError", "expected NCHW batch with 3 channels");
    torch::NoGradGuard no_grad;
    const bool was_training = model->is_training();
    model->eval();
    auto probs = torch::softmax(model->forward(batch), 1);
    if (was_training) model->train();
    return probs;
}

// Full-model checkpoint: weights archive + JSON sidecar with the config digest.
inline void save_checkpoint(const Classifier& model, const ClassifierConfig& cfg,
                            const std::filesystem::path& path) {
    save_named_tensors(*model, path);
    nlohmann::json meta = {{"config_digest", cfg.digest()},
                           {"hidden_dim", cfg.hidden_dim},
                           {"pipeline_version", kPipelineVersion}};
    write_text_file(path.string() + ".json", meta.dump(2) + "\n");
}

inline Classifier load_checkpoint(const std::filesystem::path& path, int hidden_dim = 256) {
    Classifier model(hidden_dim);
    load_named_tensors(*model, path);
    return model;
}

}  // namespace neuroink
