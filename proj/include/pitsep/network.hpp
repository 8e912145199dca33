#pragma once

// Declarative layer list with a stable hash, plus the builder that turns it
// into a runnable Sequential. Checkpoints record the hash of the spec they
// were trained with.

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "pitsep/layers.hpp"

namespace pitsep {

struct LayerSpec {
    std::string kind;
    std::map<std::string, long> p;  // channels, kernel, dilation, stride, sources...

    long get(const std::string& key, long fallback = -1) const {
        auto it = p.find(key);
        if (it != p.end()) return it->second;
        if (fallback >= 0) return fallback;
        throw ParamError("network spec: layer '" + kind + "' missing parameter '" + key + "'");
    }
};

struct NetworkSpec {
    std::vector<LayerSpec> layers;

    LayerSpec& add(const std::string& kind, std::map<std::string, long> params = {}) {
        layers.push_back({kind, std::move(params)});
        return layers.back();
    }

    uint64_t hash() const {
        uint64_t h = 1469598103934665603ULL;  // FNV-1a
        auto mix = [&h](const std::string& s) {
            for (unsigned char c : s) {
                h ^= c;
                h *= 1099511628211ULL;
            }
            h ^= 0xff;
            h *= 1099511628211ULL;
        };
        for (const auto& l : layers) {
            mix(l.kind);
            for (const auto& [k, v] : l.p) {
                mix(k);
                mix(std::to_string(v));
            }
        }
        return h;
    }
};

// Builds the stack; `film` supplies the shared FiLM parameters when the spec
// contains film layers (required in that case, unused otherwise).
template <class S>
std::unique_ptr<Sequential<S>> build_network(const NetworkSpec& spec, std::mt19937_64& rng,
                                             std::shared_ptr<FilmParams<S>> film = nullptr) {
    auto net = std::make_unique<Sequential<S>>();
    for (const auto& l : spec.layers) {
        if (l.kind == "linear" || l.kind == "pointwise-conv1d") {
            net->add(std::make_unique<Linear<S>>(l.get("in"), l.get("out"), rng));
        } else if (l.kind == "conv1d") {
            net->add(std::make_unique<Conv1d<S>>(l.get("in"), l.get("out"), l.get("kernel"),
                                                 l.get("dilation", 1), l.get("stride", 1), rng));
        } else if (l.kind == "depthwise-conv1d") {
            net->add(std::make_unique<DepthwiseConv1d<S>>(l.get("channels"), l.get("kernel"),
                                               l.get("dilation", 1), rng));
        } else if (l.kind == "relu") {
            net->add(std::make_unique<ReLU<S>>());
        } else if (l.kind == "prelu") {
            net->add(std::make_unique<PReLU<S>>());
        } else if (l.kind == "sigmoid") {
            net->add(std::make_unique<Sigmoid<S>>());
        } else if (l.kind == "softmax-over-sources") {
            net->add(std::make_unique<SoftmaxOverSources<S>>(static_cast<int>(l.get("sources", 2))));
        } else if (l.kind == "batchnorm1d") {
            net->add(std::make_unique<BatchNorm1d<S>>(l.get("channels")));
        } else if (l.kind == "global-layernorm") {
            net->add(std::make_unique<GlobalLayerNorm<S>>(l.get("channels")));
        } else if (l.kind == "film") {
            if (!film) throw ParamError("network spec: film layer needs shared FiLM parameters");
            net->add(std::make_unique<Film<S>>(film));
        } else if (l.kind == "residual-tcn-block") {
            net->add(std::make_unique<ResidualTcnBlock<S>>(l.get("bottleneck"), l.get("hidden"),
                                                           l.get("kernel"), l.get("dilation"), rng,
                                                           l.get("film", 0) ? film : nullptr));
        } else {
            throw ParamError("network spec: unknown layer kind '" + l.kind + "'");
        }
    }
    return net;
}

}  // namespace pitsep
