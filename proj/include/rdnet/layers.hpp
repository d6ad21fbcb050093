#pragma once

#include <string>

#include "rdnet/ops.hpp"
#include "rdnet/param_store.hpp"

namespace rdnet {

struct Conv2d {
    Tensor weight;  // (Cout, Cin, k, k)
    Tensor bias;    // (1, Cout, 1, 1)

    Tensor operator()(const Tensor& x) const { return conv2d(x, weight, bias); }
    std::size_t kernel() const { return weight.shape().h; }
};

inline Conv2d make_conv(ParamStore& store, const std::string& name, std::size_t in, std::size_t out,
                        std::size_t kernel, Rng& rng) {
    if (kernel % 2 == 0) throw ArgumentError("conv '" + name + "': kernel size must be odd");
    return {store.add_uniform(name + ".weight", {out, in, kernel, kernel}, in * kernel * kernel, rng),
            store.add_zeros(name + ".bias", {1, out, 1, 1})};
}

struct Linear {
    Tensor weight;  // (1, 1, Dout, D)
    Tensor bias;    // (1, Dout, 1, 1)

    Tensor operator()(const Tensor& x) const { return fully_connected(x, weight, bias); }
};

inline Linear make_linear(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
    return {store.add_uniform(name + ".weight", {1, 1, out, in}, in, rng), store.add_zeros(name + ".bias", {1, out, 1, 1})};
}

}  // namespace rdnet
