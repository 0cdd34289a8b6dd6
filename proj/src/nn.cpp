#include "vbid/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace vbid {

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

std::string fmt_hex(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%a", v);
  return buf;
}

double parse_hex(const std::string& s) {
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str()) throw ParseError("bad numeric field: " + s);
  return v;
}

// ---------------------------------------------------------------------------
// Parameter layout
//
// MLP with layer sizes [in, h1, ..., hk, 1]:
//   W0 (h1 x in), b0 (1 x h1), W1, b1, ..., Wk (1 x hk), bk (1 x 1)
//
// LSTM with hidden_units [H1, H2, f1, ..., fm]:
//   lstm0.W (4*H1 x in), lstm0.U (4*H1 x H1), lstm0.b (1 x 4*H1)
//   lstm1.W (4*H2 x H1), lstm1.U (4*H2 x H2), lstm1.b (1 x 4*H2)
//   then dense layers [H2, f1, ..., fm, 1] as in the MLP.
// Gate row blocks are ordered [input; forget; cell; output].
// ---------------------------------------------------------------------------

std::vector<std::size_t> mlp_layer_sizes(std::size_t input_dim,
                                         const std::vector<int>& hidden) {
  std::vector<std::size_t> sizes;
  sizes.push_back(input_dim);
  for (int h : hidden) sizes.push_back(static_cast<std::size_t>(h));
  sizes.push_back(1);
  return sizes;
}

struct LstmCache {
  // Per timestep: gate activations and states.
  std::vector<std::vector<double>> ig, fg, gg, og, c, h, tanh_c;
  std::size_t T = 0, H = 0;
  void init(std::size_t t, std::size_t hh) {
    T = t;
    H = hh;
    for (auto* v : {&ig, &fg, &gg, &og, &c, &h, &tanh_c}) {
      v->assign(T, std::vector<double>(H, 0.0));
    }
  }
};

// Forward pass of one LSTM layer over `x` (T rows), caching activations.
void lstm_forward(const Matrix& W, const Matrix& U, const Matrix& b,
                  const std::vector<std::vector<double>>& x, LstmCache& cache) {
  const std::size_t T = x.size();
  const std::size_t H = U.cols;
  const std::size_t D = W.cols;
  cache.init(T, H);
  std::vector<double> prev_h(H, 0.0), prev_c(H, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t j = 0; j < H; ++j) {
      double zi = b(0, j), zf = b(0, H + j), zg = b(0, 2 * H + j),
             zo = b(0, 3 * H + j);
      for (std::size_t k = 0; k < D; ++k) {
        double xv = x[t][k];
        zi += W(j, k) * xv;
        zf += W(H + j, k) * xv;
        zg += W(2 * H + j, k) * xv;
        zo += W(3 * H + j, k) * xv;
      }
      for (std::size_t k = 0; k < H; ++k) {
        double hv = prev_h[k];
        zi += U(j, k) * hv;
        zf += U(H + j, k) * hv;
        zg += U(2 * H + j, k) * hv;
        zo += U(3 * H + j, k) * hv;
      }
      double i = sigmoid(zi), f = sigmoid(zf), g = std::tanh(zg), o = sigmoid(zo);
      double c = f * prev_c[j] + i * g;
      double tc = std::tanh(c);
      cache.ig[t][j] = i;
      cache.fg[t][j] = f;
      cache.gg[t][j] = g;
      cache.og[t][j] = o;
      cache.c[t][j] = c;
      cache.tanh_c[t][j] = tc;
      cache.h[t][j] = o * tc;
    }
    prev_h = cache.h[t];
    prev_c = cache.c[t];
  }
}

// BPTT for one LSTM layer. dh[t] holds dL/dh_t; returns dL/dx and adds
// parameter gradients into gW/gU/gb.
std::vector<std::vector<double>> lstm_backward(
    const Matrix& W, const Matrix& U, const LstmCache& cache,
    const std::vector<std::vector<double>>& x,
    const std::vector<std::vector<double>>& dh_out, Matrix& gW, Matrix& gU,
    Matrix& gb) {
  const std::size_t T = cache.T, H = cache.H, D = W.cols;
  std::vector<std::vector<double>> dx(T, std::vector<double>(D, 0.0));
  std::vector<double> dh(H, 0.0), dc(H, 0.0);
  for (std::size_t ti = T; ti-- > 0;) {
    std::vector<double> dzi(H), dzf(H), dzg(H), dzo(H);
    for (std::size_t j = 0; j < H; ++j) {
      double dhj = dh[j] + dh_out[ti][j];
      double o = cache.og[ti][j], tc = cache.tanh_c[ti][j];
      double dcj = dc[j] + dhj * o * (1.0 - tc * tc);
      double i = cache.ig[ti][j], f = cache.fg[ti][j], g = cache.gg[ti][j];
      double c_prev = ti > 0 ? cache.c[ti - 1][j] : 0.0;
      dzi[j] = dcj * g * i * (1.0 - i);
      dzf[j] = dcj * c_prev * f * (1.0 - f);
      dzg[j] = dcj * i * (1.0 - g * g);
      dzo[j] = dhj * tc * o * (1.0 - o);
      dc[j] = dcj * f;
    }
    const std::vector<double>* h_prev = ti > 0 ? &cache.h[ti - 1] : nullptr;
    std::fill(dh.begin(), dh.end(), 0.0);
    for (std::size_t j = 0; j < H; ++j) {
      const double dz[4] = {dzi[j], dzf[j], dzg[j], dzo[j]};
      for (int gate = 0; gate < 4; ++gate) {
        std::size_t row = gate * H + j;
        double d = dz[gate];
        if (d == 0.0) continue;
        for (std::size_t k = 0; k < D; ++k) {
          gW(row, k) += d * x[ti][k];
          dx[ti][k] += d * W(row, k);
        }
        if (h_prev) {
          for (std::size_t k = 0; k < H; ++k) {
            gU(row, k) += d * (*h_prev)[k];
          }
        }
        for (std::size_t k = 0; k < H; ++k) dh[k] += d * U(row, k);
        gb(0, row) += d;
      }
    }
  }
  return dx;
}

struct DenseStack {
  // Dense tail shared by both kinds: tanh hiddens, sigmoid scalar output.
  // params/grads are views by index into the model's flat list.
  std::size_t first_param = 0;  // index of first W
  std::size_t n_layers = 0;
};

}  // namespace

void NnHyperparams::validate() const {
  if (hidden_units.empty()) throw InvalidConfig("hidden_units must be nonempty");
  for (int h : hidden_units) {
    if (h <= 0) throw InvalidConfig("hidden_units must be positive");
  }
  if (dropout_rate < 0.0 || dropout_rate >= 1.0) {
    throw InvalidConfig("dropout_rate must be in [0,1)");
  }
  if (learning_rate <= 0.0) throw InvalidConfig("learning_rate must be > 0");
  if (batch_size <= 0) throw InvalidConfig("batch_size must be > 0");
  if (epochs <= 0) throw InvalidConfig("epochs must be > 0");
  if (lookback <= 0) throw InvalidConfig("lookback must be > 0");
}

ModelKind model_kind_from_string(const std::string& s) {
  if (s == "mlp") return ModelKind::mlp;
  if (s == "lstm") return ModelKind::lstm;
  throw InvalidConfig("unknown model kind: " + s);
}

std::string to_string(ModelKind k) {
  return k == ModelKind::mlp ? "mlp" : "lstm";
}

namespace {

NnModel make_model(ModelKind kind, std::size_t input_dim,
                   const NnHyperparams& hp, std::mt19937_64& rng) {
  hp.validate();
  if (kind == ModelKind::lstm && hp.hidden_units.size() < 2) {
    throw InvalidConfig("lstm needs at least two hidden_units entries");
  }
  NnModel m;
  m.kind = kind;
  m.hp = hp;
  m.input_dim = input_dim;

  auto add = [&](const std::string& name, std::size_t r, std::size_t c,
                 std::size_t fan_in) {
    Matrix w(r, c);
    double s = fan_in > 0 ? 1.0 / std::sqrt(static_cast<double>(fan_in)) : 0.0;
    std::uniform_real_distribution<double> u(-s, s);
    for (double& v : w.a) v = u(rng);
    m.param_names.push_back(name);
    m.params.push_back(std::move(w));
  };
  auto add_zero = [&](const std::string& name, std::size_t r, std::size_t c) {
    m.param_names.push_back(name);
    m.params.emplace_back(r, c);
  };

  std::vector<int> dense_hidden;
  std::size_t dense_in = input_dim;
  if (kind == ModelKind::lstm) {
    std::size_t H1 = static_cast<std::size_t>(hp.hidden_units[0]);
    std::size_t H2 = static_cast<std::size_t>(hp.hidden_units[1]);
    add("lstm0.W", 4 * H1, input_dim, input_dim + H1);
    add("lstm0.U", 4 * H1, H1, input_dim + H1);
    add_zero("lstm0.b", 1, 4 * H1);
    add("lstm1.W", 4 * H2, H1, H1 + H2);
    add("lstm1.U", 4 * H2, H2, H1 + H2);
    add_zero("lstm1.b", 1, 4 * H2);
    dense_hidden.assign(hp.hidden_units.begin() + 2, hp.hidden_units.end());
    dense_in = H2;
  } else {
    dense_hidden = hp.hidden_units;
  }

  auto sizes = mlp_layer_sizes(dense_in, dense_hidden);
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    add("W" + std::to_string(l), sizes[l + 1], sizes[l], sizes[l]);
    add_zero("b" + std::to_string(l), 1, sizes[l + 1]);
  }
  return m;
}

std::size_t dense_first_param(const NnModel& m) {
  return m.kind == ModelKind::lstm ? 6 : 0;
}

// Forward through the dense tail. `acts` receives post-activation vectors
// (acts[0] = input). Returns the sigmoid output.
double dense_forward(const NnModel& m, const std::vector<double>& input,
                     std::vector<std::vector<double>>& acts,
                     const std::vector<std::vector<double>>* dropout_masks) {
  std::size_t p = dense_first_param(m);
  acts.clear();
  acts.push_back(input);
  std::size_t n_layers = (m.params.size() - p) / 2;
  for (std::size_t l = 0; l < n_layers; ++l) {
    const Matrix& W = m.params[p + 2 * l];
    const Matrix& b = m.params[p + 2 * l + 1];
    std::vector<double> z(W.rows);
    for (std::size_t i = 0; i < W.rows; ++i) {
      double s = b(0, i);
      for (std::size_t j = 0; j < W.cols; ++j) s += W(i, j) * acts.back()[j];
      z[i] = s;
    }
    bool last = (l + 1 == n_layers);
    for (std::size_t i = 0; i < z.size(); ++i) {
      z[i] = last ? sigmoid(z[i]) : std::tanh(z[i]);
    }
    if (!last && dropout_masks) {
      for (std::size_t i = 0; i < z.size(); ++i) z[i] *= (*dropout_masks)[l][i];
    }
    acts.push_back(std::move(z));
  }
  return acts.back()[0];
}

// Backward through the dense tail given dL/dy_hat; fills dL/dinput and adds
// parameter gradients.
std::vector<double> dense_backward(
    const NnModel& m, const std::vector<std::vector<double>>& acts,
    double dloss_dy, std::vector<Matrix>& grads,
    const std::vector<std::vector<double>>* dropout_masks) {
  std::size_t p = dense_first_param(m);
  std::size_t n_layers = (m.params.size() - p) / 2;
  // delta at output: sigmoid derivative
  double yhat = acts.back()[0];
  std::vector<double> delta{dloss_dy * yhat * (1.0 - yhat)};
  for (std::size_t l = n_layers; l-- > 0;) {
    const Matrix& W = m.params[p + 2 * l];
    Matrix& gW = grads[p + 2 * l];
    Matrix& gb = grads[p + 2 * l + 1];
    const std::vector<double>& a_in = acts[l];
    std::vector<double> dprev(W.cols, 0.0);
    for (std::size_t i = 0; i < W.rows; ++i) {
      gb(0, i) += delta[i];
      for (std::size_t j = 0; j < W.cols; ++j) {
        gW(i, j) += delta[i] * a_in[j];
        dprev[j] += delta[i] * W(i, j);
      }
    }
    if (l > 0) {
      if (dropout_masks) {
        for (std::size_t j = 0; j < dprev.size(); ++j) {
          dprev[j] *= (*dropout_masks)[l - 1][j];
        }
      }
      // tanh' = 1 - a^2 (a is the pre-dropout activation; with inverted
      // dropout the mask is applied after, so recover a from stored value)
      const std::vector<double>& a = acts[l];
      for (std::size_t j = 0; j < dprev.size(); ++j) {
        double av = a[j];
        if (dropout_masks) {
          double mk = (*dropout_masks)[l - 1][j];
          av = mk > 0.0 ? av / mk : 0.0;
        }
        dprev[j] *= (1.0 - av * av);
      }
    }
    delta = std::move(dprev);
  }
  return delta;
}

struct SampleRef {
  std::size_t row = 0;  // mlp: dataset row; lstm: window end row
};

// Loss (squared error) and gradient for one sample. Dropout masks, when
// provided, are indexed [dense layer][unit] and, for the LSTM, two extra
// leading masks for the recurrent layer outputs.
double sample_loss_grad(const NnModel& m, const NnDataset& data,
                        const SampleRef& s, std::vector<Matrix>* grads,
                        const std::vector<std::vector<double>>* lstm_masks,
                        const std::vector<std::vector<double>>* dense_masks) {
  double target = data.y[s.row];
  if (m.kind == ModelKind::mlp) {
    std::vector<double> x(data.x.cols);
    for (std::size_t j = 0; j < data.x.cols; ++j) x[j] = data.x(s.row, j);
    std::vector<std::vector<double>> acts;
    double yhat = dense_forward(m, x, acts, dense_masks);
    double err = yhat - target;
    if (grads) dense_backward(m, acts, 2.0 * err, *grads, dense_masks);
    return err * err;
  }

  const std::size_t T = static_cast<std::size_t>(m.hp.lookback);
  const std::size_t start = s.row + 1 - T;
  std::vector<std::vector<double>> x0(T, std::vector<double>(data.x.cols));
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t j = 0; j < data.x.cols; ++j) {
      x0[t][j] = data.x(start + t, j);
    }
  }
  LstmCache c0, c1;
  lstm_forward(m.params[0], m.params[1], m.params[2], x0, c0);
  std::vector<std::vector<double>> h0 = c0.h;
  if (lstm_masks) {
    for (auto& row : h0) {
      for (std::size_t j = 0; j < row.size(); ++j) row[j] *= (*lstm_masks)[0][j];
    }
  }
  lstm_forward(m.params[3], m.params[4], m.params[5], h0, c1);
  std::vector<double> top = c1.h[T - 1];
  if (lstm_masks) {
    for (std::size_t j = 0; j < top.size(); ++j) top[j] *= (*lstm_masks)[1][j];
  }
  std::vector<std::vector<double>> acts;
  double yhat = dense_forward(m, top, acts, dense_masks);
  double err = yhat - target;
  if (!grads) return err * err;

  std::vector<double> dtop =
      dense_backward(m, acts, 2.0 * err, *grads, dense_masks);
  if (lstm_masks) {
    for (std::size_t j = 0; j < dtop.size(); ++j) dtop[j] *= (*lstm_masks)[1][j];
  }
  std::vector<std::vector<double>> dh1(T, std::vector<double>(c1.H, 0.0));
  dh1[T - 1] = dtop;
  auto dh0 = lstm_backward(m.params[3], m.params[4], c1, h0, dh1, (*grads)[3],
                           (*grads)[4], (*grads)[5]);
  if (lstm_masks) {
    for (auto& row : dh0) {
      for (std::size_t j = 0; j < row.size(); ++j) row[j] *= (*lstm_masks)[0][j];
    }
  }
  lstm_backward(m.params[0], m.params[1], c0, x0, dh0, (*grads)[0],
                (*grads)[1], (*grads)[2]);
  return err * err;
}

std::vector<SampleRef> enumerate_samples(ModelKind kind, const NnDataset& data,
                                         int lookback) {
  std::vector<SampleRef> out;
  auto segments = data.segments;
  if (segments.empty()) segments.push_back({0, data.x.rows});
  for (auto [a, b] : segments) {
    if (b > data.x.rows) throw ShapeMismatch("segment exceeds dataset");
    if (kind == ModelKind::mlp) {
      for (std::size_t r = a; r < b; ++r) out.push_back({r});
    } else {
      for (std::size_t r = a + static_cast<std::size_t>(lookback) - 1; r < b; ++r) {
        out.push_back({r});
      }
    }
  }
  return out;
}

double mean_loss(const NnModel& m, const NnDataset& data,
                 const std::vector<SampleRef>& samples) {
  if (samples.empty()) return 0.0;
  double total = 0.0;
  for (const auto& s : samples) {
    total += sample_loss_grad(m, data, s, nullptr, nullptr, nullptr);
  }
  return total / static_cast<double>(samples.size());
}

}  // namespace

double NnModel::predict_row(const std::vector<double>& x) const {
  if (kind != ModelKind::mlp) throw ShapeMismatch("predict_row needs an mlp");
  if (x.size() != input_dim) throw ShapeMismatch("input dimension mismatch");
  std::vector<std::vector<double>> acts;
  return dense_forward(*this, x, acts, nullptr);
}

double NnModel::predict_seq(const Matrix& seq) const {
  if (kind != ModelKind::lstm) throw ShapeMismatch("predict_seq needs an lstm");
  if (seq.cols != input_dim ||
      seq.rows != static_cast<std::size_t>(hp.lookback)) {
    throw ShapeMismatch("sequence shape mismatch");
  }
  std::vector<std::vector<double>> x0(seq.rows, std::vector<double>(seq.cols));
  for (std::size_t t = 0; t < seq.rows; ++t) {
    for (std::size_t j = 0; j < seq.cols; ++j) x0[t][j] = seq(t, j);
  }
  LstmCache c0, c1;
  lstm_forward(params[0], params[1], params[2], x0, c0);
  lstm_forward(params[3], params[4], params[5], c0.h, c1);
  std::vector<std::vector<double>> acts;
  return dense_forward(*this, c1.h[seq.rows - 1], acts, nullptr);
}

NnModel train(ModelKind kind, const NnDataset& data, const NnHyperparams& hp,
              TrainStats* stats) {
  hp.validate();
  if (data.x.rows == 0 || data.y.size() != data.x.rows) {
    throw ShapeMismatch("dataset rows and targets must match and be nonempty");
  }
  for (double t : data.y) {
    if (!(t > 0.0) || !(t < 1.0)) {
      throw OutOfRange("targets must be sigmoid-scaled into (0,1)");
    }
  }

  std::mt19937_64 init_rng(child_seed(hp.seed, "nn.init"));
  NnModel m = make_model(kind, data.x.cols, hp, init_rng);

  auto samples = enumerate_samples(kind, data, hp.lookback);
  if (samples.empty()) throw EmptyDataset("no trainable samples");

  // Hold out the trailing 10% as a validation split for early stopping.
  std::size_t n_val = samples.size() >= 20 ? samples.size() / 10 : 0;
  std::vector<SampleRef> train_set(samples.begin(), samples.end() - n_val);
  std::vector<SampleRef> val_set(samples.end() - n_val, samples.end());

  std::mt19937_64 shuffle_rng(child_seed(hp.seed, "nn.shuffle"));
  std::mt19937_64 dropout_rng(child_seed(hp.seed, "nn.dropout"));
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::vector<Matrix> grads, adam_m, adam_v;
  for (const auto& p : m.params) {
    grads.emplace_back(p.rows, p.cols);
    adam_m.emplace_back(p.rows, p.cols);
    adam_v.emplace_back(p.rows, p.cols);
  }

  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  long long step = 0;

  double initial_loss = mean_loss(m, data, train_set);
  if (!std::isfinite(initial_loss)) throw NonFiniteLoss("initial loss not finite");

  // Dropout mask shapes: per dense hidden layer, and for LSTM also the two
  // recurrent layer outputs (mask shared across timesteps).
  std::vector<std::size_t> dense_widths;
  {
    std::size_t p = dense_first_param(m);
    std::size_t n_layers = (m.params.size() - p) / 2;
    for (std::size_t l = 0; l + 1 < n_layers; ++l) {
      dense_widths.push_back(m.params[p + 2 * l].rows);
    }
  }
  std::vector<std::size_t> lstm_widths;
  if (kind == ModelKind::lstm) {
    lstm_widths = {m.params[1].cols, m.params[4].cols};
  }

  double best_val = std::numeric_limits<double>::infinity();
  std::vector<Matrix> best_params = m.params;
  int since_best = 0;
  int epochs_run = 0;

  for (int epoch = 0; epoch < hp.epochs; ++epoch) {
    ++epochs_run;
    std::shuffle(train_set.begin(), train_set.end(), shuffle_rng);
    for (std::size_t off = 0; off < train_set.size();
         off += static_cast<std::size_t>(hp.batch_size)) {
      std::size_t end = std::min(train_set.size(),
                                 off + static_cast<std::size_t>(hp.batch_size));
      for (auto& g : grads) std::fill(g.a.begin(), g.a.end(), 0.0);
      double batch_loss = 0.0;
      for (std::size_t s = off; s < end; ++s) {
        std::vector<std::vector<double>> dmask, lmask;
        std::vector<std::vector<double>>* dm = nullptr;
        std::vector<std::vector<double>>* lm = nullptr;
        if (hp.dropout_rate > 0.0) {
          double keep = 1.0 - hp.dropout_rate;
          auto draw = [&](std::size_t w) {
            std::vector<double> mask(w);
            for (double& v : mask) v = unit(dropout_rng) < keep ? 1.0 / keep : 0.0;
            return mask;
          };
          for (std::size_t w : lstm_widths) lmask.push_back(draw(w));
          for (std::size_t w : dense_widths) dmask.push_back(draw(w));
          dm = dmask.empty() ? nullptr : &dmask;
          lm = lmask.empty() ? nullptr : &lmask;
        }
        batch_loss += sample_loss_grad(m, data, train_set[s], &grads, lm, dm);
      }
      double inv = 1.0 / static_cast<double>(end - off);
      if (!std::isfinite(batch_loss)) {
        throw NonFiniteLoss("training diverged at epoch " +
                            std::to_string(epoch));
      }
      ++step;
      double bc1 = 1.0 - std::pow(b1, static_cast<double>(step));
      double bc2 = 1.0 - std::pow(b2, static_cast<double>(step));
      for (std::size_t p = 0; p < m.params.size(); ++p) {
        for (std::size_t i = 0; i < m.params[p].a.size(); ++i) {
          double g = grads[p].a[i] * inv;
          double& mm = adam_m[p].a[i];
          double& vv = adam_v[p].a[i];
          mm = b1 * mm + (1.0 - b1) * g;
          vv = b2 * vv + (1.0 - b2) * g * g;
          m.params[p].a[i] -=
              hp.learning_rate * (mm / bc1) / (std::sqrt(vv / bc2) + eps);
        }
      }
    }
    const auto& probe = val_set.empty() ? train_set : val_set;
    double val = mean_loss(m, data, probe);
    if (!std::isfinite(val)) throw NonFiniteLoss("validation loss not finite");
    if (val < best_val) {
      best_val = val;
      best_params = m.params;
      since_best = 0;
    } else if (++since_best >= hp.patience) {
      break;
    }
  }
  m.params = best_params;

  double final_loss = mean_loss(m, data, train_set);
  if (stats) {
    stats->initial_loss = initial_loss;
    stats->final_loss = final_loss;
    stats->epochs_run = epochs_run;
  }
  return m;
}

double gradient_check(const NnModel& model, const Matrix& sample_x,
                      double target, double epsilon, std::uint64_t seed,
                      std::size_t max_params) {
  if (epsilon < 1e-6 || epsilon > 1e-4) {
    throw OutOfRange("epsilon must be in [1e-6, 1e-4]");
  }
  NnDataset d;
  d.x = sample_x;
  d.y.assign(sample_x.rows, target);
  SampleRef s{sample_x.rows - 1};

  std::vector<Matrix> grads;
  for (const auto& p : model.params) grads.emplace_back(p.rows, p.cols);
  sample_loss_grad(model, d, s, &grads, nullptr, nullptr);

  std::vector<std::pair<std::size_t, std::size_t>> all;
  for (std::size_t p = 0; p < model.params.size(); ++p) {
    for (std::size_t i = 0; i < model.params[p].a.size(); ++i) {
      all.push_back({p, i});
    }
  }
  std::mt19937_64 rng(seed);
  std::shuffle(all.begin(), all.end(), rng);
  if (all.size() > max_params) all.resize(max_params);

  NnModel probe = model;
  double worst = 0.0;
  for (auto [p, i] : all) {
    double orig = probe.params[p].a[i];
    probe.params[p].a[i] = orig + epsilon;
    double lp = sample_loss_grad(probe, d, s, nullptr, nullptr, nullptr);
    probe.params[p].a[i] = orig - epsilon;
    double lmn = sample_loss_grad(probe, d, s, nullptr, nullptr, nullptr);
    probe.params[p].a[i] = orig;
    double fd = (lp - lmn) / (2.0 * epsilon);
    double an = grads[p].a[i];
    double rel = std::fabs(fd - an) / std::max({std::fabs(fd), std::fabs(an), 1e-8});
    worst = std::max(worst, rel);
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Forecaster wrappers
// ---------------------------------------------------------------------------

namespace {

struct AlignedFeatures {
  // z-scored feature rows aligned to a sorted hour list
  std::vector<HourStamp> hours;
  std::vector<std::vector<double>> rows;
  std::size_t index_of(HourStamp h) const {
    auto it = std::lower_bound(hours.begin(), hours.end(), h);
    if (it == hours.end() || *it != h) return static_cast<std::size_t>(-1);
    return static_cast<std::size_t>(it - hours.begin());
  }
};

AlignedFeatures align_features(const std::vector<FeatureStat>& stats,
                               const std::vector<std::string>& names,
                               const FeatureFrameSeries& features) {
  if (features.names != names) {
    throw FeatureMismatch("feature names do not match trained-on list");
  }
  FeatureFrameSeries z = zscore_apply(stats, features);
  std::vector<std::size_t> order(z.hours.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return z.hours[a] < z.hours[b]; });
  AlignedFeatures out;
  for (std::size_t k : order) {
    out.hours.push_back(z.hours[k]);
    out.rows.push_back(z.values[k]);
  }
  return out;
}

// Builds the LSTM input window ending at hour index `hi`; rows must be
// hourly-contiguous.
Matrix build_window(const AlignedFeatures& af, std::size_t hi, int lookback,
                    const std::vector<double>& extra) {
  if (hi + 1 < static_cast<std::size_t>(lookback)) {
    throw InsufficientHistory("not enough leading hours for LSTM lookback");
  }
  std::size_t start = hi + 1 - static_cast<std::size_t>(lookback);
  for (std::size_t t = start; t < hi; ++t) {
    if (af.hours[t + 1] - af.hours[t] != kHourSec) {
      throw InsufficientHistory("gap in hourly features inside LSTM window");
    }
  }
  Matrix seq(static_cast<std::size_t>(lookback), af.rows[0].size() + extra.size());
  for (std::size_t t = 0; t < seq.rows; ++t) {
    const auto& row = af.rows[start + t];
    for (std::size_t j = 0; j < row.size(); ++j) seq(t, j) = row[j];
    for (std::size_t j = 0; j < extra.size(); ++j) {
      seq(t, row.size() + j) = extra[j];
    }
  }
  return seq;
}

void contiguous_segments(const std::vector<HourStamp>& hours,
                         std::vector<std::pair<std::size_t, std::size_t>>& segs,
                         std::size_t offset) {
  std::size_t start = 0;
  for (std::size_t i = 1; i <= hours.size(); ++i) {
    if (i == hours.size() || hours[i] - hours[i - 1] != kHourSec) {
      segs.push_back({offset + start, offset + i});
      start = i;
    }
  }
}

}  // namespace

std::vector<ForecastPoint> SpreadForecastModel::predict(
    const FeatureFrameSeries& features,
    const std::vector<HourStamp>& hours) const {
  AlignedFeatures af = align_features(feature_stats, feature_names, features);
  std::vector<ForecastPoint> out;
  for (HourStamp h : hours) {
    std::size_t hi = af.index_of(h);
    if (hi == static_cast<std::size_t>(-1)) {
      throw InsufficientHistory("no features for hour " + format_hour_utc(h));
    }
    for (std::size_t n = 0; n < nodes.size(); ++n) {
      std::vector<double> onehot(nodes.size(), 0.0);
      onehot[n] = 1.0;
      double raw;
      if (net.kind == ModelKind::mlp) {
        std::vector<double> x = af.rows[hi];
        x.insert(x.end(), onehot.begin(), onehot.end());
        raw = net.predict_row(x);
      } else {
        raw = net.predict_seq(build_window(af, hi, net.hp.lookback, onehot));
      }
      out.push_back({h, nodes[n], sigmoid_unscale(raw, theta_by_node[n])});
    }
  }
  return out;
}

std::vector<ForecastPoint> QuantityForecastModel::predict(
    const FeatureFrameSeries& features,
    const std::vector<HourStamp>& hours) const {
  AlignedFeatures af = align_features(feature_stats, feature_names, features);
  std::vector<ForecastPoint> out;
  for (HourStamp h : hours) {
    std::size_t hi = af.index_of(h);
    if (hi == static_cast<std::size_t>(-1)) {
      throw InsufficientHistory("no features for hour " + format_hour_utc(h));
    }
    double raw;
    if (net.kind == ModelKind::mlp) {
      raw = net.predict_row(af.rows[hi]);
    } else {
      raw = net.predict_seq(build_window(af, hi, net.hp.lookback, {}));
    }
    out.push_back({h, "", sigmoid_unscale(raw, theta_v)});
  }
  return out;
}

SpreadForecastModel train_spread_model(const SpreadPanel& panel,
                                       const FeatureFrameSeries& features,
                                       ModelKind kind, const NnHyperparams& hp,
                                       TrainStats* stats) {
  SpreadForecastModel model;
  model.feature_names = features.names;
  auto [fstats, zfeat] = zscore_fit_apply(features);
  model.feature_stats = fstats;
  model.nodes = panel.nodes;

  AlignedFeatures af = align_features(fstats, features.names, features);

  // Per-node theta from training spread volatility.
  const std::size_t N = panel.node_count();
  for (std::size_t i = 0; i < N; ++i) {
    double mean = 0.0;
    for (double s : panel.spread[i]) mean += s;
    mean /= static_cast<double>(panel.hour_count());
    double var = 0.0;
    for (double s : panel.spread[i]) var += (s - mean) * (s - mean);
    var /= std::max<std::size_t>(1, panel.hour_count() - 1);
    model.theta_by_node.push_back(theta_from_spread_stddev(std::sqrt(var)));
  }

  // One row per (node, hour) with node one-hot; per-node contiguous segments.
  NnDataset data;
  const std::size_t D = features.names.size() + N;
  std::vector<std::vector<double>> rows;
  std::vector<HourStamp> hour_of_row;
  for (std::size_t i = 0; i < N; ++i) {
    std::size_t seg_offset = rows.size();
    std::vector<HourStamp> node_hours;
    for (std::size_t h = 0; h < panel.hour_count(); ++h) {
      std::size_t hi = af.index_of(panel.hours[h]);
      if (hi == static_cast<std::size_t>(-1)) {
        throw InsufficientHistory("features missing for panel hour " +
                                  format_hour_utc(panel.hours[h]));
      }
      std::vector<double> row = af.rows[hi];
      row.resize(D, 0.0);
      row[features.names.size() + i] = 1.0;
      rows.push_back(std::move(row));
      node_hours.push_back(panel.hours[h]);
      data.y.push_back(sigmoid_scale(panel.spread[i][h], model.theta_by_node[i]));
    }
    contiguous_segments(node_hours, data.segments, seg_offset);
    (void)hour_of_row;
  }
  data.x = Matrix(rows.size(), D);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t j = 0; j < D; ++j) data.x(r, j) = rows[r][j];
  }
  model.net = train(kind, data, hp, stats);
  return model;
}

QuantityForecastModel train_quantity_model(
    const std::vector<MarketVirtualQuantity>& vbids,
    const FeatureFrameSeries& features, ModelKind kind,
    const NnHyperparams& hp, TrainStats* stats) {
  QuantityForecastModel model;
  model.feature_names = features.names;
  auto [fstats, zfeat] = zscore_fit_apply(features);
  model.feature_stats = fstats;
  (void)zfeat;
  AlignedFeatures af = align_features(fstats, features.names, features);

  double mean = 0.0;
  for (const auto& q : vbids) mean += q.net_mwh();
  mean /= std::max<std::size_t>(1, vbids.size());
  double var = 0.0;
  for (const auto& q : vbids) {
    var += (q.net_mwh() - mean) * (q.net_mwh() - mean);
  }
  var /= std::max<std::size_t>(1, vbids.size() - 1);
  // theta_v stays well above the spread thetas; widen it with the observed
  // quantity dispersion.
  model.theta_v = std::max(1000.0, std::sqrt(var));

  NnDataset data;
  std::vector<std::vector<double>> rows;
  std::vector<HourStamp> row_hours;
  for (const auto& q : vbids) {
    std::size_t hi = af.index_of(q.hour);
    if (hi == static_cast<std::size_t>(-1)) continue;
    rows.push_back(af.rows[hi]);
    row_hours.push_back(q.hour);
    data.y.push_back(sigmoid_scale(q.net_mwh(), model.theta_v));
  }
  if (rows.empty()) throw EmptyDataset("no overlapping vbids/features hours");
  contiguous_segments(row_hours, data.segments, 0);
  data.x = Matrix(rows.size(), features.names.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t j = 0; j < rows[r].size(); ++j) data.x(r, j) = rows[r][j];
  }
  model.net = train(kind, data, hp, stats);
  return model;
}

// ---------------------------------------------------------------------------
// Bundle serialization
// ---------------------------------------------------------------------------

namespace {

void write_net(std::ostream& out, const NnModel& m) {
  out << "kind " << to_string(m.kind) << '\n';
  out << "input_dim " << m.input_dim << '\n';
  out << "hp";
  for (int h : m.hp.hidden_units) out << ' ' << h;
  out << " | " << fmt_hex(m.hp.dropout_rate) << ' ' << fmt_hex(m.hp.learning_rate)
      << ' ' << m.hp.batch_size << ' ' << m.hp.epochs << ' ' << m.hp.lookback
      << ' ' << m.hp.patience << ' ' << m.hp.seed << '\n';
  out << "params " << m.params.size() << '\n';
  for (std::size_t p = 0; p < m.params.size(); ++p) {
    const Matrix& w = m.params[p];
    out << m.param_names[p] << ' ' << w.rows << ' ' << w.cols << '\n';
    for (std::size_t i = 0; i < w.a.size(); ++i) {
      out << fmt_hex(w.a[i]) << (((i + 1) % 8 == 0) ? '\n' : ' ');
    }
    if (w.a.size() % 8 != 0) out << '\n';
  }
}

NnModel read_net(std::istream& in) {
  NnModel m;
  std::string tok;
  in >> tok;
  if (tok != "kind") throw ParseError("model bundle: expected 'kind'");
  in >> tok;
  m.kind = model_kind_from_string(tok);
  in >> tok >> m.input_dim;
  if (tok != "input_dim") throw ParseError("model bundle: expected 'input_dim'");
  in >> tok;
  if (tok != "hp") throw ParseError("model bundle: expected 'hp'");
  m.hp.hidden_units.clear();
  while (in >> tok && tok != "|") m.hp.hidden_units.push_back(std::stoi(tok));
  in >> tok;
  m.hp.dropout_rate = parse_hex(tok);
  in >> tok;
  m.hp.learning_rate = parse_hex(tok);
  in >> m.hp.batch_size >> m.hp.epochs >> m.hp.lookback >> m.hp.patience >>
      m.hp.seed;
  std::size_t n_params = 0;
  in >> tok >> n_params;
  if (tok != "params") throw ParseError("model bundle: expected 'params'");
  for (std::size_t p = 0; p < n_params; ++p) {
    std::string name;
    std::size_t r, c;
    in >> name >> r >> c;
    Matrix w(r, c);
    for (auto& v : w.a) {
      in >> tok;
      v = parse_hex(tok);
    }
    m.param_names.push_back(name);
    m.params.push_back(std::move(w));
  }
  if (!in) throw ParseError("model bundle: truncated");
  return m;
}

void write_stats(std::ostream& out, const std::vector<FeatureStat>& stats) {
  out << "stats " << stats.size() << '\n';
  for (const auto& s : stats) {
    out << s.name << ' ' << fmt_hex(s.mean) << ' ' << fmt_hex(s.stddev) << ' '
        << (s.onehot ? 1 : 0) << ' ' << (s.constant ? 1 : 0) << '\n';
  }
}

std::vector<FeatureStat> read_stats(std::istream& in) {
  std::string tok;
  std::size_t n = 0;
  in >> tok >> n;
  if (tok != "stats") throw ParseError("model bundle: expected 'stats'");
  std::vector<FeatureStat> stats(n);
  for (auto& s : stats) {
    std::string mean, sd;
    int oh, cst;
    in >> s.name >> mean >> sd >> oh >> cst;
    s.mean = parse_hex(mean);
    s.stddev = parse_hex(sd);
    s.onehot = oh != 0;
    s.constant = cst != 0;
  }
  return stats;
}

}  // namespace

void save_spread_model(const SpreadForecastModel& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << "vbid-spread-model v1\n";
  out << "features " << m.feature_names.size() << '\n';
  for (const auto& n : m.feature_names) out << n << '\n';
  write_stats(out, m.feature_stats);
  out << "nodes " << m.nodes.size() << '\n';
  for (std::size_t i = 0; i < m.nodes.size(); ++i) {
    out << m.nodes[i] << ' ' << fmt_hex(m.theta_by_node[i]) << '\n';
  }
  write_net(out, m.net);
}

SpreadForecastModel load_spread_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  std::string magic, version;
  in >> magic >> version;
  if (magic != "vbid-spread-model" || version != "v1") {
    throw ParseError(path + ": not a v1 spread model bundle");
  }
  SpreadForecastModel m;
  std::string tok;
  std::size_t k = 0;
  in >> tok >> k;
  if (tok != "features") throw ParseError("bundle: expected 'features'");
  m.feature_names.resize(k);
  for (auto& n : m.feature_names) in >> n;
  m.feature_stats = read_stats(in);
  std::size_t nn = 0;
  in >> tok >> nn;
  if (tok != "nodes") throw ParseError("bundle: expected 'nodes'");
  m.nodes.resize(nn);
  m.theta_by_node.resize(nn);
  for (std::size_t i = 0; i < nn; ++i) {
    std::string th;
    in >> m.nodes[i] >> th;
    m.theta_by_node[i] = parse_hex(th);
  }
  m.net = read_net(in);
  return m;
}

void save_quantity_model(const QuantityForecastModel& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << "vbid-quantity-model v1\n";
  out << "features " << m.feature_names.size() << '\n';
  for (const auto& n : m.feature_names) out << n << '\n';
  write_stats(out, m.feature_stats);
  out << "theta_v " << fmt_hex(m.theta_v) << '\n';
  write_net(out, m.net);
}

QuantityForecastModel load_quantity_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  std::string magic, version;
  in >> magic >> version;
  if (magic != "vbid-quantity-model" || version != "v1") {
    throw ParseError(path + ": not a v1 quantity model bundle");
  }
  QuantityForecastModel m;
  std::string tok;
  std::size_t k = 0;
  in >> tok >> k;
  if (tok != "features") throw ParseError("bundle: expected 'features'");
  m.feature_names.resize(k);
  for (auto& n : m.feature_names) in >> n;
  m.feature_stats = read_stats(in);
  std::string th;
  in >> tok >> th;
  if (tok != "theta_v") throw ParseError("bundle: expected 'theta_v'");
  m.theta_v = parse_hex(th);
  m.net = read_net(in);
  return m;
}

}  // namespace vbid
