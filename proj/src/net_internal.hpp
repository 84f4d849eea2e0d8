#pragma once

#include <cstdint>
#include <vector>

#include "specadv/matrix.hpp"
#include "specadv/network.hpp"

namespace specadv {
namespace detail {

struct ConvShape {
  std::size_t in_ch = 0, in_r = 0, in_c = 0;
  std::size_t filters = 0, kr = 0, kc = 0;
  std::size_t conv_r = 0, conv_c = 0;
  std::size_t pr = 0, pc = 0, psr = 0, psc = 0;
  std::size_t pool_r = 0, pool_c = 0;
  std::size_t w_off = 0, b_off = 0;

  std::size_t in_size() const { return in_ch * in_r * in_c; }
  std::size_t conv_size() const { return filters * conv_r * conv_c; }
  std::size_t pool_size() const { return filters * pool_r * pool_c; }
};

struct DenseShape {
  std::size_t in = 0, out = 0;
  std::size_t w_off = 0, b_off = 0;
};

struct Shapes {
  std::vector<ConvShape> conv;
  std::vector<DenseShape> dense;  // hidden layers then the softmax head
  std::size_t flat = 0;           // dense stack input width
  std::size_t params = 0;
};

Shapes compute_shapes(const ArchitectureSpec& spec);

// Per-element activation buffers, reused across calls.
struct Workspace {
  std::vector<double> input;  // standardized element, row-major grid
  std::vector<std::vector<double>> conv_pre, conv_post, pool_out;
  std::vector<std::vector<std::uint32_t>> pool_src;
  std::vector<std::vector<double>> dense_pre, dense_act;  // dense_act.back() = posterior
  std::vector<std::vector<double>> d_conv_in;             // backward scratch per stage
  std::vector<double> d_a, d_b;                           // backward scratch for dense stack

  void init(const Shapes& shapes);
};

// masks: one scale vector per hidden dense layer (0 dropped, 1/(1-p) kept);
// pass nullptr for inference.
void forward_element(const NetworkParams& params, const Shapes& shapes, const Mat& element,
                     Workspace& ws, const std::vector<std::vector<double>>* masks);

// Accumulates the element's cross-entropy gradient into grad (when given)
// and writes the gradient with respect to the raw element into grad_in
// (when given). Must follow a forward_element call on the same workspace.
void backward_element(const NetworkParams& params, const Shapes& shapes, Workspace& ws,
                      std::size_t label, std::vector<double>* grad, Mat* grad_in,
                      const std::vector<std::vector<double>>* masks);

}  // namespace detail
}  // namespace specadv
