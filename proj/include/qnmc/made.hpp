#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace qnmc::made {

/// Bitstrings of fixed length `dim`, packed as integers (bit d = variable d).
/// Text form: one line per row, character d is '0' or '1'.
struct BitDataset {
  int dim = 0;
  std::vector<std::uint64_t> rows;

  std::size_t size() const noexcept { return rows.size(); }
  void save(const std::string& path) const;
  static BitDataset load(const std::string& path);
};

struct MadeArchitecture {
  int input_dim = 0;
  /// ordering[d] = o(d) in {1..D}: position of input d in the autoregressive order.
  std::vector<int> ordering;
  /// degrees[l][k] = m(k) in {1..D-1} for hidden unit k of hidden layer l.
  std::vector<std::vector<int>> degrees;

  int hidden_layers() const noexcept { return static_cast<int>(degrees.size()); }

  /// Identity ordering and m(k) = ((k-1) mod (D-1)) + 1 in every hidden layer.
  /// Width defaults to 2D. For D = 1 all degrees are 1 (hidden units then
  /// never reach the output).
  static MadeArchitecture standard(int input_dim, int hidden_layers = 2, int hidden_width = 0);

  void validate() const;
  nlohmann::json to_json() const;
  static MadeArchitecture from_json(const nlohmann::json& j);
};

/// Binary connectivity masks, one per weight matrix, shaped (fan_out x fan_in):
/// input->hidden, hidden->hidden..., hidden->output.
std::vector<Eigen::MatrixXd> build_masks(const MadeArchitecture& arch);

struct DenseLayer {
  Eigen::MatrixXd weight;  // already multiplied by mask
  Eigen::MatrixXd mask;
  Eigen::VectorXd bias;
};

/// MADE with ReLU hidden activations and sigmoid outputs:
/// y_d = p(x_d = 1 | x_{o < o(d)}).
class MadeModel {
 public:
  /// Zero weights and biases: every conditional is 0.5.
  explicit MadeModel(MadeArchitecture arch);
  /// Glorot-uniform weights (masked), zero biases.
  MadeModel(MadeArchitecture arch, std::uint64_t init_seed);

  const MadeArchitecture& architecture() const noexcept { return arch_; }
  int input_dim() const noexcept { return arch_.input_dim; }
  const std::vector<DenseLayer>& layers() const noexcept { return layers_; }
  std::vector<DenseLayer>& mutable_layers() noexcept { return layers_; }
  std::uint64_t init_seed() const noexcept { return init_seed_; }

  /// Pre-sigmoid outputs for a batch (rows = samples).
  Eigen::MatrixXd logits(const Eigen::MatrixXd& inputs) const;
  Eigen::VectorXd logits(std::uint64_t bits) const;

  /// Re-applies masks to the weights (they must stay exactly zero off-mask).
  void apply_masks();

  nlohmann::json to_json() const;
  static MadeModel from_json(const nlohmann::json& j);
  void save(const std::string& path) const;
  static MadeModel load(const std::string& path);

 private:
  MadeArchitecture arch_;
  std::uint64_t init_seed_ = 0;
  std::vector<DenseLayer> layers_;
};

/// Conditionals y_d in (0,1). Inputs must be 0/1.
Eigen::VectorXd forward(const MadeModel& model, std::span<const int> x);

double log_prob(const MadeModel& model, std::span<const int> x);
double log_prob(const MadeModel& model, std::uint64_t bits);

/// log p(x) for all 2^D inputs, indexed by bit pattern.
std::vector<double> enumerate_log_probs(const MadeModel& model);

/// Mean over rows of the per-sample cross-entropy sum.
double mean_loss(const MadeModel& model, std::span<const std::uint64_t> rows);

struct TrainConfig {
  double learning_rate = 0.005;
  int batch_size = 8;
  int epochs = 30;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double test_fraction = 0.2;
  std::uint64_t seed = 0;

  void validate() const;
};

struct EpochLoss {
  int epoch;
  double train_loss;
  double test_loss;  // NaN when the test split is empty
};

struct TrainResult {
  MadeModel model;
  std::vector<EpochLoss> losses;
  /// Set when the final train loss exceeds the first epoch's.
  bool loss_increased = false;
};

/// Gradient of mean_loss over `rows`, laid out as for each layer: weight
/// (column-major, masked) then bias.
std::vector<double> loss_gradient(const MadeModel& model, std::span<const std::uint64_t> rows);

/// Flattened parameters in the same layout as loss_gradient.
std::vector<double> flatten_parameters(const MadeModel& model);
void assign_parameters(MadeModel& model, std::span<const double> params);

/// Adam on minibatches. The dataset is shuffled once (seeded) and the last
/// `test_fraction` becomes the test split; each epoch reshuffles the training
/// split from its own seeded stream. Initialization also derives from
/// config.seed, so the result is a pure function of (arch, data, config).
TrainResult train(const MadeArchitecture& arch, const BitDataset& data, const TrainConfig& config);
/// Continues training from an existing model.
TrainResult train(MadeModel model, const BitDataset& data, const TrainConfig& config);

void write_loss_csv(const std::string& path, const std::vector<EpochLoss>& losses);

struct Sample {
  std::uint64_t bits;
  double log_prob;
};

/// Ancestral sampling in the model's ordering.
std::vector<Sample> sample(const MadeModel& model, std::size_t count, std::uint64_t seed);

/// One ancestral draw from a caller-owned generator.
Sample sample_one(const MadeModel& model, std::mt19937_64& rng);

}  // namespace qnmc::made
