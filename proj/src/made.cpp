#include "qnmc/made.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>

#include "qnmc/errors.hpp"
#include "qnmc/seeding.hpp"

namespace qnmc::made {

namespace {

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// Per-variable cross-entropy from a logit: softplus(a) - x a.
double bce_from_logit(double a, int x) { return x ? softplus(-a) : softplus(a); }

// Scratch buffers for single-sample evaluation.
struct Workspace {
  std::vector<Eigen::VectorXd> act;
  explicit Workspace(const MadeModel& m) {
    for (const auto& l : m.layers()) act.emplace_back(l.bias.size());
  }
};

// Writes the output logits into ws.act.back().
void logits_into(const MadeModel& model, std::uint64_t bits, Workspace& ws) {
  const auto& layers = model.layers();
  const int dim = model.input_dim();
  // First layer: inputs are binary, so sum the active columns.
  Eigen::VectorXd& z0 = ws.act[0];
  z0 = layers[0].bias;
  for (int d = 0; d < dim; ++d)
    if ((bits >> d) & 1U) z0 += layers[0].weight.col(d);
  if (layers.size() > 1) z0 = z0.cwiseMax(0.0);
  for (std::size_t l = 1; l < layers.size(); ++l) {
    ws.act[l].noalias() = layers[l].weight * ws.act[l - 1];
    ws.act[l] += layers[l].bias;
    if (l + 1 < layers.size()) ws.act[l] = ws.act[l].cwiseMax(0.0);
  }
}

double log_prob_from_logits(const Eigen::VectorXd& a, std::uint64_t bits) {
  double lp = 0.0;
  for (Eigen::Index d = 0; d < a.size(); ++d) lp -= bce_from_logit(a[d], static_cast<int>((bits >> d) & 1U));
  return lp;
}

std::uint64_t bits_from(std::span<const int> x, int dim) {
  if (static_cast<int>(x.size()) != dim) throw InvalidArgument("MADE: input length mismatch");
  std::uint64_t b = 0;
  for (int d = 0; d < dim; ++d) {
    if (x[d] == 1)
      b |= std::uint64_t{1} << d;
    else if (x[d] != 0)
      throw InvalidArgument("MADE: inputs must be binary");
  }
  return b;
}

Eigen::MatrixXd rows_to_matrix(std::span<const std::uint64_t> rows, int dim) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), dim);
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (int d = 0; d < dim; ++d) x(static_cast<Eigen::Index>(r), d) = static_cast<double>((rows[r] >> d) & 1U);
  return x;
}

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    std::vector<double> row(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index c = 0; c < m.cols(); ++c) row[c] = m(r, c);
    rows.push_back(row);
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j, Eigen::Index rows, Eigen::Index cols) {
  if (static_cast<Eigen::Index>(j.size()) != rows) throw InvalidArgument("checkpoint: weight shape mismatch");
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = j.at(r);
    if (static_cast<Eigen::Index>(row.size()) != cols) throw InvalidArgument("checkpoint: weight shape mismatch");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row.at(c).get<double>();
  }
  return m;
}

}  // namespace

// --- dataset -------------------------------------------------------------

void BitDataset::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  std::string line(static_cast<std::size_t>(dim), '0');
  for (auto r : rows) {
    for (int d = 0; d < dim; ++d) line[d] = ((r >> d) & 1U) ? '1' : '0';
    out << line << '\n';
  }
}

BitDataset BitDataset::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("dataset not found: " + path);
  BitDataset ds;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (ds.dim == 0) {
      if (line.size() > 63) throw InvalidArgument("dataset: bitstrings longer than 63 are unsupported");
      ds.dim = static_cast<int>(line.size());
    } else if (static_cast<int>(line.size()) != ds.dim) {
      throw InvalidArgument("dataset: inconsistent bitstring length in " + path);
    }
    std::uint64_t r = 0;
    for (int d = 0; d < ds.dim; ++d) {
      if (line[d] == '1')
        r |= std::uint64_t{1} << d;
      else if (line[d] != '0')
        throw InvalidArgument("dataset: characters must be '0' or '1'");
    }
    ds.rows.push_back(r);
  }
  return ds;
}

// --- architecture --------------------------------------------------------

MadeArchitecture MadeArchitecture::standard(int input_dim, int hidden_layers, int hidden_width) {
  if (input_dim < 1 || input_dim > 63) throw InvalidArgument("MADE: input_dim must be in [1, 63]");
  if (hidden_layers < 1) throw InvalidArgument("MADE: need at least one hidden layer");
  if (hidden_width == 0) hidden_width = 2 * input_dim;
  if (hidden_width < 1) throw InvalidArgument("MADE: hidden_width must be >= 1");
  MadeArchitecture a;
  a.input_dim = input_dim;
  a.ordering.resize(input_dim);
  std::iota(a.ordering.begin(), a.ordering.end(), 1);
  std::vector<int> deg(hidden_width);
  for (int k = 0; k < hidden_width; ++k) deg[k] = input_dim > 1 ? (k % (input_dim - 1)) + 1 : 1;
  a.degrees.assign(hidden_layers, deg);
  return a;
}

void MadeArchitecture::validate() const {
  if (input_dim < 1 || input_dim > 63) throw InvalidArgument("MADE: input_dim must be in [1, 63]");
  if (static_cast<int>(ordering.size()) != input_dim) throw InvalidArgument("MADE: ordering length != D");
  std::vector<int> sorted = ordering;
  std::sort(sorted.begin(), sorted.end());
  for (int d = 0; d < input_dim; ++d)
    if (sorted[d] != d + 1) throw InvalidArgument("MADE: ordering must be a permutation of 1..D");
  if (degrees.empty()) throw InvalidArgument("MADE: need at least one hidden layer");
  const int hi = std::max(1, input_dim - 1);
  for (const auto& layer : degrees) {
    if (layer.empty()) throw InvalidArgument("MADE: empty hidden layer");
    for (int m : layer)
      if (m < 1 || m > hi) throw InvalidArgument("MADE: connectivity degree outside {1..D-1}");
  }
}

nlohmann::json MadeArchitecture::to_json() const {
  return {{"input_dim", input_dim}, {"ordering", ordering}, {"degrees", degrees}};
}

MadeArchitecture MadeArchitecture::from_json(const nlohmann::json& j) {
  MadeArchitecture a;
  a.input_dim = j.at("input_dim").get<int>();
  a.ordering = j.at("ordering").get<std::vector<int>>();
  a.degrees = j.at("degrees").get<std::vector<std::vector<int>>>();
  a.validate();
  return a;
}

std::vector<Eigen::MatrixXd> build_masks(const MadeArchitecture& arch) {
  arch.validate();
  const int dim = arch.input_dim;
  std::vector<Eigen::MatrixXd> masks;

  const auto& first = arch.degrees.front();
  Eigen::MatrixXd m0(static_cast<Eigen::Index>(first.size()), dim);
  for (std::size_t k = 0; k < first.size(); ++k)
    for (int d = 0; d < dim; ++d) m0(k, d) = first[k] >= arch.ordering[d] ? 1.0 : 0.0;
  masks.push_back(std::move(m0));

  for (std::size_t l = 1; l < arch.degrees.size(); ++l) {
    const auto& prev = arch.degrees[l - 1];
    const auto& cur = arch.degrees[l];
    Eigen::MatrixXd m(static_cast<Eigen::Index>(cur.size()), static_cast<Eigen::Index>(prev.size()));
    for (std::size_t k = 0; k < cur.size(); ++k)
      for (std::size_t kp = 0; kp < prev.size(); ++kp) m(k, kp) = cur[k] >= prev[kp] ? 1.0 : 0.0;
    masks.push_back(std::move(m));
  }

  const auto& last = arch.degrees.back();
  Eigen::MatrixXd mo(dim, static_cast<Eigen::Index>(last.size()));
  for (int d = 0; d < dim; ++d)
    for (std::size_t k = 0; k < last.size(); ++k) mo(d, k) = arch.ordering[d] > last[k] ? 1.0 : 0.0;
  masks.push_back(std::move(mo));
  return masks;
}

// --- model ---------------------------------------------------------------

MadeModel::MadeModel(MadeArchitecture arch) : arch_(std::move(arch)) {
  for (auto& mask : build_masks(arch_)) {
    DenseLayer layer;
    layer.weight = Eigen::MatrixXd::Zero(mask.rows(), mask.cols());
    layer.bias = Eigen::VectorXd::Zero(mask.rows());
    layer.mask = std::move(mask);
    layers_.push_back(std::move(layer));
  }
}

MadeModel::MadeModel(MadeArchitecture arch, std::uint64_t init_seed) : MadeModel(std::move(arch)) {
  init_seed_ = init_seed;
  std::mt19937_64 rng(init_seed);
  for (auto& layer : layers_) {
    const double limit = std::sqrt(6.0 / static_cast<double>(layer.weight.rows() + layer.weight.cols()));
    std::uniform_real_distribution<double> unif(-limit, limit);
    for (Eigen::Index c = 0; c < layer.weight.cols(); ++c)
      for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) layer.weight(r, c) = unif(rng);
  }
  apply_masks();
}

void MadeModel::apply_masks() {
  for (auto& layer : layers_) layer.weight = layer.weight.cwiseProduct(layer.mask);
}

Eigen::MatrixXd MadeModel::logits(const Eigen::MatrixXd& inputs) const {
  Eigen::MatrixXd h = inputs;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Eigen::MatrixXd z = h * layers_[l].weight.transpose();
    z.rowwise() += layers_[l].bias.transpose();
    h = (l + 1 < layers_.size()) ? Eigen::MatrixXd(z.cwiseMax(0.0)) : z;
  }
  return h;
}

Eigen::VectorXd MadeModel::logits(std::uint64_t bits) const {
  Workspace ws(*this);
  logits_into(*this, bits, ws);
  return ws.act.back();
}

nlohmann::json MadeModel::to_json() const {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : layers_) {
    std::vector<double> b(l.bias.data(), l.bias.data() + l.bias.size());
    layers.push_back({{"weight", matrix_to_json(l.weight)}, {"bias", b}});
  }
  return {{"format", "qnmc-made-v1"},
          {"activation", "relu"},
          {"architecture", arch_.to_json()},
          {"init_seed", init_seed_},
          {"layers", layers}};
}

MadeModel MadeModel::from_json(const nlohmann::json& j) {
  if (j.value("format", std::string()) != "qnmc-made-v1") throw InvalidArgument("checkpoint: unknown format");
  MadeModel m(MadeArchitecture::from_json(j.at("architecture")));
  m.init_seed_ = j.value("init_seed", std::uint64_t{0});
  const auto& layers = j.at("layers");
  if (layers.size() != m.layers_.size()) throw InvalidArgument("checkpoint: layer count mismatch");
  for (std::size_t l = 0; l < m.layers_.size(); ++l) {
    auto& dst = m.layers_[l];
    dst.weight = matrix_from_json(layers[l].at("weight"), dst.weight.rows(), dst.weight.cols());
    const auto b = layers[l].at("bias").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(b.size()) != dst.bias.size()) throw InvalidArgument("checkpoint: bias shape mismatch");
    dst.bias = Eigen::Map<const Eigen::VectorXd>(b.data(), dst.bias.size());
  }
  m.apply_masks();
  return m;
}

void MadeModel::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << to_json().dump() << '\n';
}

MadeModel MadeModel::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("model checkpoint not found: " + path);
  return from_json(nlohmann::json::parse(in));
}

// --- inference -----------------------------------------------------------

Eigen::VectorXd forward(const MadeModel& model, std::span<const int> x) {
  const auto a = model.logits(bits_from(x, model.input_dim()));
  return a.unaryExpr([](double z) { return sigmoid(z); });
}

double log_prob(const MadeModel& model, std::span<const int> x) {
  return log_prob(model, bits_from(x, model.input_dim()));
}

double log_prob(const MadeModel& model, std::uint64_t bits) {
  if (model.input_dim() < 64 && (bits >> model.input_dim())) throw InvalidArgument("log_prob: bits out of range");
  Workspace ws(model);
  logits_into(model, bits, ws);
  return log_prob_from_logits(ws.act.back(), bits);
}

std::vector<double> enumerate_log_probs(const MadeModel& model) {
  const int dim = model.input_dim();
  if (dim > 24) throw ResourceLimitError("enumerate_log_probs: input_dim above 24");
  const std::uint64_t count = std::uint64_t{1} << dim;
  std::vector<double> out(count);
  Workspace ws(model);
  for (std::uint64_t b = 0; b < count; ++b) {
    logits_into(model, b, ws);
    out[b] = log_prob_from_logits(ws.act.back(), b);
  }
  return out;
}

double mean_loss(const MadeModel& model, std::span<const std::uint64_t> rows) {
  if (rows.empty()) return std::numeric_limits<double>::quiet_NaN();
  Workspace ws(model);
  double total = 0.0;
  for (auto r : rows) {
    logits_into(model, r, ws);
    total -= log_prob_from_logits(ws.act.back(), r);
  }
  return total / static_cast<double>(rows.size());
}

// --- training ------------------------------------------------------------

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw InvalidArgument("TrainConfig: learning_rate must be > 0");
  if (batch_size < 1) throw InvalidArgument("TrainConfig: batch_size must be >= 1");
  if (epochs < 1) throw InvalidArgument("TrainConfig: epochs must be >= 1");
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) throw InvalidArgument("TrainConfig: test_fraction must be in [0, 1)");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0))
    throw InvalidArgument("TrainConfig: Adam decay rates must be in [0, 1)");
  if (!(adam_epsilon > 0.0)) throw InvalidArgument("TrainConfig: adam_epsilon must be > 0");
}

namespace {

// Gradients for one batch, same shapes as the model layers. Returns the mean loss.
double batch_gradient(const MadeModel& model, std::span<const std::uint64_t> rows,
                      std::vector<Eigen::MatrixXd>& gw, std::vector<Eigen::VectorXd>& gb) {
  const auto& layers = model.layers();
  const std::size_t nl = layers.size();
  const double inv_b = 1.0 / static_cast<double>(rows.size());
  const Eigen::MatrixXd x = rows_to_matrix(rows, model.input_dim());

  std::vector<Eigen::MatrixXd> acts{x};  // acts[l] = input to layer l
  std::vector<Eigen::MatrixXd> pre;
  for (std::size_t l = 0; l < nl; ++l) {
    Eigen::MatrixXd z = acts.back() * layers[l].weight.transpose();
    z.rowwise() += layers[l].bias.transpose();
    pre.push_back(z);
    if (l + 1 < nl) acts.push_back(z.cwiseMax(0.0));
  }
  const Eigen::MatrixXd& a = pre.back();

  double loss = 0.0;
  Eigen::MatrixXd delta(a.rows(), a.cols());
  for (Eigen::Index r = 0; r < a.rows(); ++r)
    for (Eigen::Index d = 0; d < a.cols(); ++d) {
      const int xd = x(r, d) > 0.5 ? 1 : 0;
      loss += bce_from_logit(a(r, d), xd);
      delta(r, d) = (sigmoid(a(r, d)) - xd) * inv_b;
    }

  gw.resize(nl);
  gb.resize(nl);
  for (std::size_t l = nl; l-- > 0;) {
    gw[l] = (delta.transpose() * acts[l]).cwiseProduct(layers[l].mask);
    gb[l] = delta.colwise().sum().transpose();
    if (l > 0) {
      Eigen::MatrixXd back = delta * layers[l].weight;
      // ReLU subgradient 1 at 0: with zero biases, all-zero inputs sit exactly on the kink.
      delta = back.cwiseProduct((pre[l - 1].array() >= 0.0).cast<double>().matrix());
    }
  }
  return loss * inv_b;
}

}  // namespace

std::vector<double> flatten_parameters(const MadeModel& model) {
  std::vector<double> p;
  for (const auto& l : model.layers()) {
    p.insert(p.end(), l.weight.data(), l.weight.data() + l.weight.size());
    p.insert(p.end(), l.bias.data(), l.bias.data() + l.bias.size());
  }
  return p;
}

void assign_parameters(MadeModel& model, std::span<const double> params) {
  std::size_t off = 0;
  for (auto& l : model.mutable_layers()) {
    const auto nw = static_cast<std::size_t>(l.weight.size());
    const auto nb = static_cast<std::size_t>(l.bias.size());
    if (off + nw + nb > params.size()) throw InvalidArgument("assign_parameters: too few values");
    std::copy_n(params.data() + off, nw, l.weight.data());
    off += nw;
    std::copy_n(params.data() + off, nb, l.bias.data());
    off += nb;
  }
  if (off != params.size()) throw InvalidArgument("assign_parameters: too many values");
  model.apply_masks();
}

std::vector<double> loss_gradient(const MadeModel& model, std::span<const std::uint64_t> rows) {
  if (rows.empty()) throw InvalidArgument("loss_gradient: empty batch");
  std::vector<Eigen::MatrixXd> gw;
  std::vector<Eigen::VectorXd> gb;
  batch_gradient(model, rows, gw, gb);
  std::vector<double> g;
  for (std::size_t l = 0; l < gw.size(); ++l) {
    g.insert(g.end(), gw[l].data(), gw[l].data() + gw[l].size());
    g.insert(g.end(), gb[l].data(), gb[l].data() + gb[l].size());
  }
  return g;
}

TrainResult train(const MadeArchitecture& arch, const BitDataset& data, const TrainConfig& config) {
  return train(MadeModel(arch, derive_seed(config.seed, "made-init")), data, config);
}

TrainResult train(MadeModel model, const BitDataset& data, const TrainConfig& config) {
  config.validate();
  if (data.rows.empty()) throw InvalidArgument("train: empty dataset");
  if (data.dim != model.input_dim()) throw InvalidArgument("train: dataset width != model input_dim");

  std::vector<std::uint64_t> rows = data.rows;
  std::mt19937_64 split_rng(derive_seed(config.seed, "made-split"));
  std::shuffle(rows.begin(), rows.end(), split_rng);
  auto n_test = static_cast<std::size_t>(std::floor(config.test_fraction * static_cast<double>(rows.size())));
  if (n_test >= rows.size()) n_test = rows.size() - 1;
  const std::vector<std::uint64_t> test(rows.end() - static_cast<std::ptrdiff_t>(n_test), rows.end());
  std::vector<std::uint64_t> train_rows(rows.begin(), rows.end() - static_cast<std::ptrdiff_t>(n_test));

  auto& layers = model.mutable_layers();
  std::vector<Eigen::MatrixXd> mw, vw;
  std::vector<Eigen::VectorXd> mb, vb;
  for (const auto& l : layers) {
    mw.push_back(Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()));
    vw.push_back(Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()));
    mb.push_back(Eigen::VectorXd::Zero(l.bias.size()));
    vb.push_back(Eigen::VectorXd::Zero(l.bias.size()));
  }
  const double b1 = config.adam_beta1, b2 = config.adam_beta2, eps = config.adam_epsilon;
  long step = 0;

  TrainResult result{model, {}, false};
  std::vector<Eigen::MatrixXd> gw;
  std::vector<Eigen::VectorXd> gb;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::mt19937_64 epoch_rng(derive_seed(config.seed, "made-epoch", {static_cast<std::uint64_t>(epoch)}));
    std::shuffle(train_rows.begin(), train_rows.end(), epoch_rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < train_rows.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t len = std::min<std::size_t>(static_cast<std::size_t>(config.batch_size), train_rows.size() - start);
      const std::span<const std::uint64_t> batch(train_rows.data() + start, len);
      loss_sum += batch_gradient(model, batch, gw, gb) * static_cast<double>(len);

      ++step;
      const double c1 = 1.0 - std::pow(b1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(b2, static_cast<double>(step));
      const double lr = config.learning_rate;
      for (std::size_t l = 0; l < layers.size(); ++l) {
        mw[l] = b1 * mw[l] + (1.0 - b1) * gw[l];
        vw[l] = b2 * vw[l] + (1.0 - b2) * gw[l].cwiseProduct(gw[l]);
        layers[l].weight.array() -= lr * (mw[l].array() / c1) / ((vw[l].array() / c2).sqrt() + eps);
        mb[l] = b1 * mb[l] + (1.0 - b1) * gb[l];
        vb[l] = b2 * vb[l] + (1.0 - b2) * gb[l].cwiseProduct(gb[l]);
        layers[l].bias.array() -= lr * (mb[l].array() / c1) / ((vb[l].array() / c2).sqrt() + eps);
      }
      model.apply_masks();
    }
    result.losses.push_back({epoch, loss_sum / static_cast<double>(train_rows.size()), mean_loss(model, test)});
  }
  result.model = std::move(model);
  result.loss_increased = result.losses.back().train_loss > result.losses.front().train_loss;
  return result;
}

void write_loss_csv(const std::string& path, const std::vector<EpochLoss>& losses) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "epoch,train_loss,test_loss\n" << std::setprecision(17);
  for (const auto& l : losses) out << l.epoch << ',' << l.train_loss << ',' << l.test_loss << '\n';
}

// --- sampling ------------------------------------------------------------

Sample sample_one(const MadeModel& model, std::mt19937_64& rng) {
  const auto& arch = model.architecture();
  const int dim = arch.input_dim;
  std::vector<int> by_position(dim);
  for (int d = 0; d < dim; ++d) by_position[arch.ordering[d] - 1] = d;

  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Workspace ws(model);
  std::uint64_t bits = 0;
  for (int pos = 0; pos < dim; ++pos) {
    const int d = by_position[pos];
    logits_into(model, bits, ws);
    if (unif(rng) < sigmoid(ws.act.back()[d])) bits |= std::uint64_t{1} << d;
  }
  logits_into(model, bits, ws);
  return {bits, log_prob_from_logits(ws.act.back(), bits)};
}

std::vector<Sample> sample(const MadeModel& model, std::size_t count, std::uint64_t seed) {
  if (count < 1) throw InvalidArgument("sample: count must be >= 1");
  std::mt19937_64 rng(seed);
  std::vector<Sample> out;
  out.reserve(count);
  for (std::size_t s = 0; s < count; ++s) out.push_back(sample_one(model, rng));
  return out;
}

}  // namespace qnmc::made
