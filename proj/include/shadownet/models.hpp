#pragma once

#include "shadownet/graph.hpp"
#include "shadownet/rng.hpp"

namespace shadownet {
namespace models {

// Named toy models. All weights are drawn deterministically from the seed.

// One conv(3x3, 3->64) + batchnorm + relu6 stack on a 32x32x3 input.
ModelGraph fig1(uint64_t seed);

// Four-conv CNN with batchnorm/relu6 between convs and a softmax head.
ModelGraph fig2(uint64_t seed);

// Residual-style block: two branches (3x3 conv and pointwise projection)
// merged by an add, then a final conv and softmax head.
ModelGraph shortcut(uint64_t seed);

// Small VGG-flavored stack: conv pairs with max-pooling, then two dense
// layers and softmax.
ModelGraph minivgg_toy(uint64_t seed);

// Depthwise-separable blocks (dwconv + pointwise), pooling and a dense head.
ModelGraph mobile_toy(uint64_t seed);

// Structured random CNN covering all layer kinds; may contain depthwise
// blocks, pooling, a shortcut merge and a dense head.
ModelGraph random_model(uint64_t seed);

ModelGraph by_name(const std::string& name, uint64_t seed);
const std::vector<std::string>& names();

// Uniform random activation in [-1, 1).
TensorF random_activation(const Shape& s, Rng& rng);

}  // namespace models
}  // namespace shadownet
