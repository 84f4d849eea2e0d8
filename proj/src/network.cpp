#include "specadv/network.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "net_internal.hpp"
#include "specadv/errors.hpp"

namespace specadv {
namespace {

constexpr double kStdevFloor = 1e-8;
constexpr double kPosteriorFloor = 1e-38;

void check_element_shape(const ArchitectureSpec& spec, const Mat& element) {
  if (element.rows() != spec.input_rows || element.cols() != spec.input_cols)
    throw DataError("element shape " + std::to_string(element.rows()) + "x" +
                    std::to_string(element.cols()) + " does not match network input " +
                    std::to_string(spec.input_rows) + "x" + std::to_string(spec.input_cols));
}

}  // namespace

ArchitectureSpec ArchitectureSpec::dnn(std::size_t width, std::size_t classes) {
  ArchitectureSpec s;
  s.kind = ArchKind::dnn;
  s.input_rows = 513;
  s.input_cols = 1;
  s.hidden = {width, width, width};
  s.class_count = classes;
  return s;
}

ArchitectureSpec ArchitectureSpec::cdnn(std::size_t classes) {
  ArchitectureSpec s;
  s.kind = ArchKind::cdnn;
  s.input_rows = 513;
  s.input_cols = 100;
  s.conv = {{32, 400, 4, 4, 4, 2, 2}, {32, 8, 8, 4, 4, 2, 2}};
  s.hidden = {50};
  s.class_count = classes;
  return s;
}

void ArchitectureSpec::validate() const {
  if (class_count < 2) throw DataError("network needs at least two classes");
  if (input_rows == 0 || input_cols == 0) throw DataError("empty network input shape");
  if (kind == ArchKind::dnn) {
    if (!conv.empty()) throw DataError("dnn must not have conv stages");
    if (input_cols != 1) throw DataError("dnn processes single-frame elements");
    if (hidden.empty()) throw DataError("dnn needs at least one hidden layer");
  } else {
    if (conv.empty()) throw DataError("cdnn needs at least one conv stage");
  }
  for (const std::size_t w : hidden)
    if (w == 0) throw DataError("hidden layer width must be positive");
  detail::compute_shapes(*this);
}

namespace detail {

Shapes compute_shapes(const ArchitectureSpec& spec) {
  Shapes shapes;
  std::size_t offset = 0;

  std::size_t ch = 1, rows = spec.input_rows, cols = spec.input_cols;
  for (const ConvStage& stage : spec.conv) {
    if (stage.filters == 0 || stage.kernel_rows == 0 || stage.kernel_cols == 0 ||
        stage.pool_rows == 0 || stage.pool_cols == 0 || stage.pool_row_stride == 0 ||
        stage.pool_col_stride == 0)
      throw DataError("conv stage has a zero dimension");
    if (stage.kernel_rows > rows || stage.kernel_cols > cols)
      throw DataError("conv kernel " + std::to_string(stage.kernel_rows) + "x" +
                      std::to_string(stage.kernel_cols) + " exceeds its input " +
                      std::to_string(rows) + "x" + std::to_string(cols));
    ConvShape cs;
    cs.in_ch = ch;
    cs.in_r = rows;
    cs.in_c = cols;
    cs.filters = stage.filters;
    cs.kr = stage.kernel_rows;
    cs.kc = stage.kernel_cols;
    cs.conv_r = rows - stage.kernel_rows + 1;
    cs.conv_c = cols - stage.kernel_cols + 1;
    if (stage.pool_rows > cs.conv_r || stage.pool_cols > cs.conv_c)
      throw DataError("pool window exceeds the conv output");
    cs.pr = stage.pool_rows;
    cs.pc = stage.pool_cols;
    cs.psr = stage.pool_row_stride;
    cs.psc = stage.pool_col_stride;
    cs.pool_r = (cs.conv_r - cs.pr) / cs.psr + 1;
    cs.pool_c = (cs.conv_c - cs.pc) / cs.psc + 1;
    cs.w_off = offset;
    offset += cs.filters * cs.in_ch * cs.kr * cs.kc;
    cs.b_off = offset;
    offset += cs.filters;
    shapes.conv.push_back(cs);
    ch = cs.filters;
    rows = cs.pool_r;
    cols = cs.pool_c;
  }

  shapes.flat = ch * rows * cols;
  std::size_t in = shapes.flat;
  for (std::size_t l = 0; l <= spec.hidden.size(); ++l) {
    DenseShape ds;
    ds.in = in;
    ds.out = l < spec.hidden.size() ? spec.hidden[l] : spec.class_count;
    ds.w_off = offset;
    offset += ds.in * ds.out;
    ds.b_off = offset;
    offset += ds.out;
    shapes.dense.push_back(ds);
    in = ds.out;
  }
  shapes.params = offset;
  return shapes;
}

void Workspace::init(const Shapes& shapes) {
  const std::size_t stages = shapes.conv.size();
  conv_pre.resize(stages);
  conv_post.resize(stages);
  pool_out.resize(stages);
  pool_src.resize(stages);
  d_conv_in.resize(stages);
  for (std::size_t s = 0; s < stages; ++s) {
    conv_pre[s].resize(shapes.conv[s].conv_size());
    conv_post[s].resize(shapes.conv[s].conv_size());
    pool_out[s].resize(shapes.conv[s].pool_size());
    pool_src[s].resize(shapes.conv[s].pool_size());
    d_conv_in[s].resize(shapes.conv[s].in_size());
  }
  input.resize(stages ? shapes.conv[0].in_size() : shapes.flat);
  dense_pre.resize(shapes.dense.size());
  dense_act.resize(shapes.dense.size());
  std::size_t widest = shapes.flat;
  for (std::size_t l = 0; l < shapes.dense.size(); ++l) {
    dense_pre[l].resize(shapes.dense[l].out);
    dense_act[l].resize(shapes.dense[l].out);
    widest = std::max(widest, shapes.dense[l].out);
  }
  d_a.resize(widest);
  d_b.resize(widest);
}

namespace {

void conv_forward(const ConvShape& cs, const double* theta, const double* in, double* pre) {
  const double* bias = theta + cs.b_off;
  for (std::size_t f = 0; f < cs.filters; ++f) {
    double* out_f = pre + f * cs.conv_r * cs.conv_c;
    const double b = bias[f];
    for (std::size_t i = 0; i < cs.conv_r * cs.conv_c; ++i) out_f[i] = b;
  }
  const double* w = theta + cs.w_off;
  for (std::size_t f = 0; f < cs.filters; ++f) {
    double* out_f = pre + f * cs.conv_r * cs.conv_c;
    for (std::size_t ic = 0; ic < cs.in_ch; ++ic) {
      const double* in_c = in + ic * cs.in_r * cs.in_c;
      const double* w_fc = w + (f * cs.in_ch + ic) * cs.kr * cs.kc;
      for (std::size_t kr = 0; kr < cs.kr; ++kr) {
        for (std::size_t kc = 0; kc < cs.kc; ++kc) {
          const double wv = w_fc[kr * cs.kc + kc];
          for (std::size_t orow = 0; orow < cs.conv_r; ++orow) {
            const double* in_row = in_c + (orow + kr) * cs.in_c + kc;
            double* out_row = out_f + orow * cs.conv_c;
            for (std::size_t oc = 0; oc < cs.conv_c; ++oc) out_row[oc] += wv * in_row[oc];
          }
        }
      }
    }
  }
}

void pool_forward(const ConvShape& cs, const double* post, double* out, std::uint32_t* src) {
  std::size_t idx = 0;
  for (std::size_t f = 0; f < cs.filters; ++f) {
    const double* post_f = post + f * cs.conv_r * cs.conv_c;
    for (std::size_t prow = 0; prow < cs.pool_r; ++prow) {
      for (std::size_t pcol = 0; pcol < cs.pool_c; ++pcol) {
        const std::size_t r0 = prow * cs.psr;
        const std::size_t c0 = pcol * cs.psc;
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_at = 0;
        for (std::size_t wr = 0; wr < cs.pr; ++wr) {
          const std::size_t row_base = (r0 + wr) * cs.conv_c + c0;
          for (std::size_t wc = 0; wc < cs.pc; ++wc) {
            const double v = post_f[row_base + wc];
            if (v > best) {
              best = v;
              best_at = row_base + wc;
            }
          }
        }
        out[idx] = best;
        src[idx] = static_cast<std::uint32_t>(f * cs.conv_r * cs.conv_c + best_at);
        ++idx;
      }
    }
  }
}

void dense_forward(const DenseShape& ds, const double* theta, const double* in, double* pre) {
  const double* w = theta + ds.w_off;
  const double* b = theta + ds.b_off;
  for (std::size_t o = 0; o < ds.out; ++o) {
    const double* w_row = w + o * ds.in;
    double acc = b[o];
    for (std::size_t i = 0; i < ds.in; ++i) acc += w_row[i] * in[i];
    pre[o] = acc;
  }
}

}  // namespace

void forward_element(const NetworkParams& params, const Shapes& shapes, const Mat& element,
                     Workspace& ws, const std::vector<std::vector<double>>* masks) {
  const ArchitectureSpec& spec = params.spec();
  check_element_shape(spec, element);
  const double* theta = params.theta().data();
  const Standardizer& st = params.standardizer();

  for (std::size_t i = 0; i < element.size(); ++i)
    ws.input[i] = (element.values()[i] - st.mean.values()[i]) / st.stdev.values()[i];

  const double* cur = ws.input.data();
  for (std::size_t s = 0; s < shapes.conv.size(); ++s) {
    const ConvShape& cs = shapes.conv[s];
    conv_forward(cs, theta, cur, ws.conv_pre[s].data());
    for (std::size_t i = 0; i < ws.conv_pre[s].size(); ++i)
      ws.conv_post[s][i] = ws.conv_pre[s][i] > 0.0 ? ws.conv_pre[s][i] : 0.0;
    pool_forward(cs, ws.conv_post[s].data(), ws.pool_out[s].data(), ws.pool_src[s].data());
    cur = ws.pool_out[s].data();
  }

  const std::size_t layers = shapes.dense.size();
  for (std::size_t l = 0; l < layers; ++l) {
    dense_forward(shapes.dense[l], theta, cur, ws.dense_pre[l].data());
    if (l + 1 < layers) {
      for (std::size_t o = 0; o < shapes.dense[l].out; ++o) {
        double v = ws.dense_pre[l][o] > 0.0 ? ws.dense_pre[l][o] : 0.0;
        if (masks) v *= (*masks)[l][o];
        ws.dense_act[l][o] = v;
      }
    } else {
      double peak = -std::numeric_limits<double>::infinity();
      for (const double v : ws.dense_pre[l]) peak = std::max(peak, v);
      double sum = 0.0;
      for (std::size_t o = 0; o < shapes.dense[l].out; ++o) {
        ws.dense_act[l][o] = std::exp(ws.dense_pre[l][o] - peak);
        sum += ws.dense_act[l][o];
      }
      for (double& v : ws.dense_act[l]) v /= sum;
    }
    cur = ws.dense_act[l].data();
  }
}

void backward_element(const NetworkParams& params, const Shapes& shapes, Workspace& ws,
                      std::size_t label, std::vector<double>* grad, Mat* grad_in,
                      const std::vector<std::vector<double>>* masks) {
  const ArchitectureSpec& spec = params.spec();
  if (label >= spec.class_count) throw DataError("label out of range");
  const double* theta = params.theta().data();
  const std::size_t layers = shapes.dense.size();

  double* delta = ws.d_a.data();
  double* next = ws.d_b.data();
  const std::vector<double>& posterior = ws.dense_act.back();
  for (std::size_t k = 0; k < spec.class_count; ++k)
    delta[k] = posterior[k] - (k == label ? 1.0 : 0.0);

  const bool need_input_grad = grad_in != nullptr || !shapes.conv.empty();
  for (std::size_t li = layers; li-- > 0;) {
    const DenseShape& ds = shapes.dense[li];
    const double* in =
        li == 0 ? (shapes.conv.empty() ? ws.input.data() : ws.pool_out.back().data())
                : ws.dense_act[li - 1].data();
    if (grad) {
      double* gw = grad->data() + ds.w_off;
      double* gb = grad->data() + ds.b_off;
      for (std::size_t o = 0; o < ds.out; ++o) {
        const double d = delta[o];
        if (d == 0.0) continue;
        double* gw_row = gw + o * ds.in;
        for (std::size_t i = 0; i < ds.in; ++i) gw_row[i] += d * in[i];
        gb[o] += d;
      }
    }
    if (li == 0 && !need_input_grad) break;

    const double* w = theta + ds.w_off;
    std::fill(next, next + ds.in, 0.0);
    for (std::size_t o = 0; o < ds.out; ++o) {
      const double d = delta[o];
      if (d == 0.0) continue;
      const double* w_row = w + o * ds.in;
      for (std::size_t i = 0; i < ds.in; ++i) next[i] += d * w_row[i];
    }
    if (li > 0) {
      for (std::size_t i = 0; i < ds.in; ++i) {
        double v = ws.dense_pre[li - 1][i] > 0.0 ? next[i] : 0.0;
        if (masks) v *= (*masks)[li - 1][i];
        next[i] = v;
      }
    }
    std::swap(delta, next);
  }

  if (shapes.conv.empty()) {
    if (grad_in) {
      const Standardizer& st = params.standardizer();
      for (std::size_t i = 0; i < grad_in->size(); ++i)
        grad_in->values()[i] = delta[i] / st.stdev.values()[i];
    }
    return;
  }

  // delta currently holds the gradient at the last pool output.
  std::vector<double> d_pool(delta, delta + shapes.flat);
  for (std::size_t s = shapes.conv.size(); s-- > 0;) {
    const ConvShape& cs = shapes.conv[s];
    std::vector<double>& d_pre = ws.conv_post[s];  // reuse as scratch
    std::fill(d_pre.begin(), d_pre.end(), 0.0);
    for (std::size_t i = 0; i < d_pool.size(); ++i) d_pre[ws.pool_src[s][i]] += d_pool[i];
    for (std::size_t i = 0; i < d_pre.size(); ++i)
      if (ws.conv_pre[s][i] <= 0.0) d_pre[i] = 0.0;

    const double* in = s == 0 ? ws.input.data() : ws.pool_out[s - 1].data();
    if (grad) {
      double* gw = grad->data() + cs.w_off;
      double* gb = grad->data() + cs.b_off;
      for (std::size_t f = 0; f < cs.filters; ++f) {
        const double* dpre_f = d_pre.data() + f * cs.conv_r * cs.conv_c;
        double acc_b = 0.0;
        for (std::size_t i = 0; i < cs.conv_r * cs.conv_c; ++i) acc_b += dpre_f[i];
        gb[f] += acc_b;
        for (std::size_t ic = 0; ic < cs.in_ch; ++ic) {
          const double* in_c = in + ic * cs.in_r * cs.in_c;
          double* gw_fc = gw + (f * cs.in_ch + ic) * cs.kr * cs.kc;
          for (std::size_t kr = 0; kr < cs.kr; ++kr) {
            for (std::size_t kc = 0; kc < cs.kc; ++kc) {
              double acc = 0.0;
              for (std::size_t orow = 0; orow < cs.conv_r; ++orow) {
                const double* in_row = in_c + (orow + kr) * cs.in_c + kc;
                const double* d_row = dpre_f + orow * cs.conv_c;
                for (std::size_t oc = 0; oc < cs.conv_c; ++oc) acc += d_row[oc] * in_row[oc];
              }
              gw_fc[kr * cs.kc + kc] += acc;
            }
          }
        }
      }
    }

    const bool need_din = s > 0 || grad_in != nullptr;
    if (!need_din) break;
    std::vector<double>& d_in = ws.d_conv_in[s];
    std::fill(d_in.begin(), d_in.end(), 0.0);
    const double* w = theta + cs.w_off;
    for (std::size_t f = 0; f < cs.filters; ++f) {
      const double* dpre_f = d_pre.data() + f * cs.conv_r * cs.conv_c;
      for (std::size_t ic = 0; ic < cs.in_ch; ++ic) {
        double* din_c = d_in.data() + ic * cs.in_r * cs.in_c;
        const double* w_fc = w + (f * cs.in_ch + ic) * cs.kr * cs.kc;
        for (std::size_t kr = 0; kr < cs.kr; ++kr) {
          for (std::size_t kc = 0; kc < cs.kc; ++kc) {
            const double wv = w_fc[kr * cs.kc + kc];
            for (std::size_t orow = 0; orow < cs.conv_r; ++orow) {
              double* din_row = din_c + (orow + kr) * cs.in_c + kc;
              const double* d_row = dpre_f + orow * cs.conv_c;
              for (std::size_t oc = 0; oc < cs.conv_c; ++oc) din_row[oc] += wv * d_row[oc];
            }
          }
        }
      }
    }
    if (s > 0) d_pool = d_in;
  }

  if (grad_in) {
    const Standardizer& st = params.standardizer();
    const std::vector<double>& d_in = ws.d_conv_in[0];
    for (std::size_t i = 0; i < grad_in->size(); ++i)
      grad_in->values()[i] = d_in[i] / st.stdev.values()[i];
  }
}

}  // namespace detail

Standardizer standardizer_fit(const std::vector<const Mat*>& elements) {
  if (elements.empty()) throw DataError("cannot fit a standardizer on no elements");
  const std::size_t rows = elements.front()->rows();
  const std::size_t cols = elements.front()->cols();
  Standardizer st;
  st.mean = Mat(rows, cols, 0.0);
  st.stdev = Mat(rows, cols, 0.0);
  for (const Mat* el : elements) {
    if (el->rows() != rows || el->cols() != cols)
      throw DataError("inconsistent element shapes while fitting the standardizer");
    for (std::size_t i = 0; i < el->size(); ++i) st.mean.values()[i] += el->values()[i];
  }
  const double n = static_cast<double>(elements.size());
  for (double& v : st.mean.values()) v /= n;
  for (const Mat* el : elements)
    for (std::size_t i = 0; i < el->size(); ++i) {
      const double d = el->values()[i] - st.mean.values()[i];
      st.stdev.values()[i] += d * d;
    }
  for (double& v : st.stdev.values()) v = std::max(std::sqrt(v / n), kStdevFloor);
  return st;
}

Standardizer standardizer_fit(const std::vector<LabeledSequence>& data) {
  std::vector<const Mat*> elements;
  for (const LabeledSequence& item : data)
    for (const Mat& el : item.seq.elements) elements.push_back(&el);
  return standardizer_fit(elements);
}

NetworkParams::NetworkParams(ArchitectureSpec spec, Standardizer standardizer,
                             std::vector<std::string> label_names, Rng& init_rng)
    : spec_(std::move(spec)), standardizer_(std::move(standardizer)),
      labels_(std::move(label_names)) {
  spec_.validate();
  if (labels_.size() != spec_.class_count)
    throw DataError("expected " + std::to_string(spec_.class_count) + " label names, got " +
                    std::to_string(labels_.size()));
  if (standardizer_.mean.rows() != spec_.input_rows ||
      standardizer_.mean.cols() != spec_.input_cols ||
      !standardizer_.mean.same_shape(standardizer_.stdev))
    throw DataError("standardizer shape does not match the network input");

  const detail::Shapes shapes = detail::compute_shapes(spec_);
  theta_.assign(shapes.params, 0.0);
  for (const detail::ConvShape& cs : shapes.conv) {
    const std::size_t fan_in = cs.in_ch * cs.kr * cs.kc;
    const std::size_t fan_out = cs.filters * cs.kr * cs.kc;
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (std::size_t i = 0; i < cs.filters * fan_in; ++i)
      theta_[cs.w_off + i] = init_rng.uniform(-bound, bound);
  }
  for (const detail::DenseShape& ds : shapes.dense) {
    const double bound = std::sqrt(6.0 / static_cast<double>(ds.in + ds.out));
    for (std::size_t i = 0; i < ds.in * ds.out; ++i)
      theta_[ds.w_off + i] = init_rng.uniform(-bound, bound);
  }
}

std::size_t parameter_count(const ArchitectureSpec& spec) {
  return detail::compute_shapes(spec).params;
}

Mat forward(const NetworkParams& params, const SpectralSequence& seq) {
  if (seq.elements.empty()) throw DataError("empty spectral sequence");
  const detail::Shapes shapes = detail::compute_shapes(params.spec());
  detail::Workspace ws;
  ws.init(shapes);
  Mat posteriors(seq.element_count(), params.spec().class_count);
  for (std::size_t n = 0; n < seq.element_count(); ++n) {
    detail::forward_element(params, shapes, seq.elements[n], ws, nullptr);
    for (std::size_t k = 0; k < params.spec().class_count; ++k)
      posteriors(n, k) = ws.dense_act.back()[k];
  }
  return posteriors;
}

double loss(const NetworkParams& params, const Mat& element, std::size_t label) {
  if (label >= params.spec().class_count) throw DataError("label out of range");
  const detail::Shapes shapes = detail::compute_shapes(params.spec());
  detail::Workspace ws;
  ws.init(shapes);
  detail::forward_element(params, shapes, element, ws, nullptr);
  return -std::log(std::max(ws.dense_act.back()[label], kPosteriorFloor));
}

std::vector<double> grad_params(const NetworkParams& params,
                                const std::vector<TrainingElement>& batch) {
  if (batch.empty()) throw DataError("empty training batch");
  const detail::Shapes shapes = detail::compute_shapes(params.spec());
  detail::Workspace ws;
  ws.init(shapes);
  std::vector<double> grad(shapes.params, 0.0);
  for (const TrainingElement& item : batch) {
    detail::forward_element(params, shapes, *item.element, ws, nullptr);
    detail::backward_element(params, shapes, ws, item.label, &grad, nullptr, nullptr);
  }
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (double& g : grad) g *= scale;
  return grad;
}

std::vector<Mat> grad_input(const NetworkParams& params, const SpectralSequence& seq,
                            std::size_t label) {
  if (seq.elements.empty()) throw DataError("empty spectral sequence");
  const detail::Shapes shapes = detail::compute_shapes(params.spec());
  detail::Workspace ws;
  ws.init(shapes);
  std::vector<Mat> grads;
  grads.reserve(seq.element_count());
  for (const Mat& el : seq.elements) {
    Mat g(el.rows(), el.cols());
    detail::forward_element(params, shapes, el, ws, nullptr);
    detail::backward_element(params, shapes, ws, label, nullptr, &g, nullptr);
    grads.push_back(std::move(g));
  }
  return grads;
}

std::vector<double> confidence(const Mat& posteriors) {
  if (posteriors.rows() == 0) throw DataError("empty posterior sequence");
  std::vector<double> r(posteriors.cols(), 0.0);
  for (std::size_t n = 0; n < posteriors.rows(); ++n)
    for (std::size_t k = 0; k < posteriors.cols(); ++k) r[k] += posteriors(n, k);
  for (double& v : r) v /= static_cast<double>(posteriors.rows());
  return r;
}

std::size_t classify(const NetworkParams& params, const SpectralSequence& seq) {
  const std::vector<double> r = confidence(forward(params, seq));
  std::size_t best = 0;
  for (std::size_t k = 1; k < r.size(); ++k)
    if (r[k] > r[best]) best = k;
  return best;
}

std::vector<std::vector<double>> aggregate_activations(const NetworkParams& params,
                                                       const SpectralSequence& seq,
                                                       std::size_t window, std::size_t hop) {
  if (window == 0 || hop == 0) throw DataError("window and hop must be positive");
  if (params.spec().hidden.empty()) throw DataError("network has no hidden layers");
  const std::size_t n = seq.element_count();
  if (n < window)
    throw DataError("sequence too short for a texture window: " + std::to_string(n) + " < " +
                    std::to_string(window));

  const detail::Shapes shapes = detail::compute_shapes(params.spec());
  detail::Workspace ws;
  ws.init(shapes);
  std::size_t dim = 0;
  for (const std::size_t w : params.spec().hidden) dim += w;

  Mat acts(n, dim);
  for (std::size_t i = 0; i < n; ++i) {
    detail::forward_element(params, shapes, seq.elements[i], ws, nullptr);
    std::size_t at = 0;
    for (std::size_t l = 0; l < params.spec().hidden.size(); ++l)
      for (const double v : ws.dense_act[l]) acts(i, at++) = v;
  }

  std::vector<std::vector<double>> out;
  for (std::size_t start = 0; start + window <= n; start += hop) {
    std::vector<double> feat(2 * dim, 0.0);
    for (std::size_t i = start; i < start + window; ++i)
      for (std::size_t d = 0; d < dim; ++d) feat[d] += acts(i, d);
    const double count = static_cast<double>(window);
    for (std::size_t d = 0; d < dim; ++d) feat[d] /= count;
    for (std::size_t i = start; i < start + window; ++i)
      for (std::size_t d = 0; d < dim; ++d) {
        const double diff = acts(i, d) - feat[d];
        feat[dim + d] += diff * diff;
      }
    for (std::size_t d = 0; d < dim; ++d) feat[dim + d] /= count;
    out.push_back(std::move(feat));
  }
  return out;
}

namespace {

constexpr char kCheckpointMagic[4] = {'A', 'D', 'N', 'N'};
constexpr std::uint32_t kCheckpointVersion = 1;

std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (const char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::size_t parse_size(const std::string& s, const char* what) {
  try {
    std::size_t pos = 0;
    const unsigned long long v = std::stoull(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw DataError(std::string("invalid ") + what + " in checkpoint: " + s);
  }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const NetworkParams& params) {
  const ArchitectureSpec& spec = params.spec();
  std::ostringstream header;
  header << "kind=" << (spec.kind == ArchKind::dnn ? "dnn" : "cdnn") << '\n';
  header << "input_rows=" << spec.input_rows << '\n';
  header << "input_cols=" << spec.input_cols << '\n';
  std::string labels;
  for (std::size_t i = 0; i < params.label_names().size(); ++i) {
    if (i) labels += ',';
    labels += params.label_names()[i];
  }
  header << "labels=" << labels << '\n';
  header << "hidden=" << join_sizes(spec.hidden) << '\n';
  if (!spec.conv.empty()) {
    header << "conv=";
    for (std::size_t s = 0; s < spec.conv.size(); ++s) {
      const ConvStage& c = spec.conv[s];
      if (s) header << ';';
      header << c.filters << ':' << c.kernel_rows << ':' << c.kernel_cols << ':' << c.pool_rows
             << ':' << c.pool_cols << ':' << c.pool_row_stride << ':' << c.pool_col_stride;
    }
    header << '\n';
  }
  header << "params=" << params.theta().size() << '\n';
  const std::string head = header.str();

  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write checkpoint: " + path.string());
    out.write(kCheckpointMagic, 4);
    const std::uint32_t version = kCheckpointVersion;
    out.write(reinterpret_cast<const char*>(&version), 4);
    const std::uint32_t head_len = static_cast<std::uint32_t>(head.size());
    out.write(reinterpret_cast<const char*>(&head_len), 4);
    out.write(head.data(), static_cast<std::streamsize>(head.size()));
    auto write_block = [&](const std::vector<double>& v) {
      out.write(reinterpret_cast<const char*>(v.data()),
                static_cast<std::streamsize>(v.size() * sizeof(double)));
    };
    write_block(params.standardizer().mean.values());
    write_block(params.standardizer().stdev.values());
    write_block(params.theta());
    if (!out) throw DataError("failed writing checkpoint: " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

NetworkParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kCheckpointMagic, 4) != 0)
    throw DataError("not a checkpoint file: " + path.string());
  std::uint32_t version = 0, head_len = 0;
  in.read(reinterpret_cast<char*>(&version), 4);
  in.read(reinterpret_cast<char*>(&head_len), 4);
  if (!in || version != kCheckpointVersion)
    throw DataError("unsupported checkpoint version: " + path.string());
  std::string head(head_len, '\0');
  in.read(head.data(), head_len);
  if (!in) throw DataError("truncated checkpoint header: " + path.string());

  std::map<std::string, std::string> fields;
  for (const std::string& line : split(head, '\n')) {
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw DataError("malformed checkpoint header line: " + line);
    fields[line.substr(0, eq)] = line.substr(eq + 1);
  }
  for (const char* key : {"kind", "input_rows", "input_cols", "labels", "hidden", "params"})
    if (!fields.count(key))
      throw DataError(std::string("checkpoint header missing ") + key + ": " + path.string());

  ArchitectureSpec spec;
  if (fields["kind"] == "dnn")
    spec.kind = ArchKind::dnn;
  else if (fields["kind"] == "cdnn")
    spec.kind = ArchKind::cdnn;
  else
    throw DataError("unknown network kind in checkpoint: " + fields["kind"]);
  spec.input_rows = parse_size(fields["input_rows"], "input_rows");
  spec.input_cols = parse_size(fields["input_cols"], "input_cols");
  std::vector<std::string> labels = split(fields["labels"], ',');
  spec.class_count = labels.size();
  if (!fields["hidden"].empty())
    for (const std::string& s : split(fields["hidden"], ','))
      spec.hidden.push_back(parse_size(s, "hidden width"));
  if (fields.count("conv") && !fields["conv"].empty()) {
    for (const std::string& stage : split(fields["conv"], ';')) {
      const std::vector<std::string> parts = split(stage, ':');
      if (parts.size() != 7) throw DataError("malformed conv stage in checkpoint: " + stage);
      ConvStage c;
      c.filters = parse_size(parts[0], "conv filters");
      c.kernel_rows = parse_size(parts[1], "conv kernel");
      c.kernel_cols = parse_size(parts[2], "conv kernel");
      c.pool_rows = parse_size(parts[3], "pool window");
      c.pool_cols = parse_size(parts[4], "pool window");
      c.pool_row_stride = parse_size(parts[5], "pool stride");
      c.pool_col_stride = parse_size(parts[6], "pool stride");
      spec.conv.push_back(c);
    }
  }
  spec.validate();

  const std::size_t declared = parse_size(fields["params"], "parameter count");
  const detail::Shapes shapes = detail::compute_shapes(spec);
  if (declared != shapes.params)
    throw DataError("checkpoint parameter count " + std::to_string(declared) +
                    " does not match the architecture (" + std::to_string(shapes.params) + ")");

  const std::size_t grid = spec.input_rows * spec.input_cols;
  Standardizer st;
  st.mean = Mat(spec.input_rows, spec.input_cols);
  st.stdev = Mat(spec.input_rows, spec.input_cols);
  std::vector<double> theta(shapes.params);
  auto read_block = [&](double* dst, std::size_t count) {
    in.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(count * sizeof(double)));
  };
  read_block(st.mean.values().data(), grid);
  read_block(st.stdev.values().data(), grid);
  read_block(theta.data(), shapes.params);
  if (!in) throw DataError("truncated checkpoint payload: " + path.string());
  in.peek();
  if (!in.eof()) throw DataError("trailing bytes in checkpoint: " + path.string());
  for (const double s : st.stdev.values())
    if (!(s > 0.0)) throw DataError("non-positive standardizer scale in checkpoint");

  Rng rng(0);
  NetworkParams params(spec, std::move(st), std::move(labels), rng);
  params.theta() = std::move(theta);
  return params;
}

}  // namespace specadv
