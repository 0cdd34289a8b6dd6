// From-scratch MLP and LSTM regressors with a shared Adam training loop,
// plus the spread / net-virtual-quantity forecaster wrappers.
#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "vbid/common.hpp"
#include "vbid/market.hpp"
#include "vbid/scaling.hpp"

namespace vbid {

struct Matrix {
  std::size_t rows = 0, cols = 0;
  std::vector<double> a;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), a(r * c, 0.0) {}
  double& operator()(std::size_t i, std::size_t j) { return a[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return a[i * cols + j]; }
  std::size_t size() const { return a.size(); }
};

struct NnHyperparams {
  std::vector<int> hidden_units = {32};  // LSTM: first two entries are the
                                         // stacked recurrent layer widths
  double dropout_rate = 0.2;
  double learning_rate = 1e-3;
  int batch_size = 64;
  int epochs = 100;
  int lookback = 24;   // LSTM input window, hours
  int patience = 10;   // early stopping on a 10% validation split
  std::uint64_t seed = 0;
  void validate() const;
};

enum class ModelKind { mlp, lstm };

ModelKind model_kind_from_string(const std::string& s);
std::string to_string(ModelKind k);

// A trained network. Parameters are stored as a flat list of named matrices
// whose layout depends on the kind (see nn.cpp). Output layer is a single
// sigmoid unit; hidden activations are tanh.
struct NnModel {
  ModelKind kind = ModelKind::mlp;
  NnHyperparams hp;
  std::size_t input_dim = 0;
  std::vector<std::string> param_names;
  std::vector<Matrix> params;

  // Raw network output in (0,1). For the LSTM, `seq` holds `lookback` rows
  // of features ordered oldest to newest.
  double predict_row(const std::vector<double>& x) const;
  double predict_seq(const Matrix& seq) const;
};

// Training data. For the LSTM, rows must form contiguous hourly runs; the
// `segments` half-open ranges mark the runs (windows never straddle them).
struct NnDataset {
  Matrix x;                // rows = samples (mlp) or hours (lstm)
  std::vector<double> y;   // sigmoid-scaled targets, one per row
  std::vector<std::pair<std::size_t, std::size_t>> segments;
};

struct TrainStats {
  double initial_loss = 0.0;
  double final_loss = 0.0;
  int epochs_run = 0;
};

NnModel train(ModelKind kind, const NnDataset& data, const NnHyperparams& hp,
              TrainStats* stats = nullptr);

// Analytic gradients vs. central finite differences on up to `max_params`
// randomly chosen parameters (dropout off). Returns the max relative error.
double gradient_check(const NnModel& model, const Matrix& sample_x,
                      double target, double epsilon,
                      std::uint64_t seed = 12345, std::size_t max_params = 200);

struct ForecastPoint {
  HourStamp hour = 0;
  std::string node_id;  // empty for the quantity model
  double value = 0.0;   // unscaled, $/MWh or MWh
};

// Shared spread model over all nodes: inputs are z-scored features plus a
// node-identity one-hot; target is the sigmoid-scaled spread with the node's
// theta.
struct SpreadForecastModel {
  NnModel net;
  std::vector<std::string> feature_names;
  std::vector<FeatureStat> feature_stats;
  std::vector<std::string> nodes;
  std::vector<double> theta_by_node;

  std::vector<ForecastPoint> predict(const FeatureFrameSeries& features,
                                     const std::vector<HourStamp>& hours) const;
};

struct QuantityForecastModel {
  NnModel net;
  std::vector<std::string> feature_names;
  std::vector<FeatureStat> feature_stats;
  double theta_v = 1000.0;

  std::vector<ForecastPoint> predict(const FeatureFrameSeries& features,
                                     const std::vector<HourStamp>& hours) const;
};

// Builds targets/features and trains. Theta per node defaults to
// clamp(stddev of training spreads, 10, 40); theta_v to 50x the max theta.
SpreadForecastModel train_spread_model(const SpreadPanel& panel,
                                       const FeatureFrameSeries& features,
                                       ModelKind kind, const NnHyperparams& hp,
                                       TrainStats* stats = nullptr);
QuantityForecastModel train_quantity_model(
    const std::vector<MarketVirtualQuantity>& vbids,
    const FeatureFrameSeries& features, ModelKind kind,
    const NnHyperparams& hp, TrainStats* stats = nullptr);

// Versioned flat-text bundles; doubles are stored as hexfloats so a loaded
// model reproduces predictions bit-exactly.
void save_spread_model(const SpreadForecastModel& m, const std::string& path);
SpreadForecastModel load_spread_model(const std::string& path);
void save_quantity_model(const QuantityForecastModel& m, const std::string& path);
QuantityForecastModel load_quantity_model(const std::string& path);

}  // namespace vbid
