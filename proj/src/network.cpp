#include "resfcn/network.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "resfcn/errors.hpp"

namespace resfcn {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little endian");

struct Network::Stage {
  struct ConvUnit {
    std::shared_ptr<BatchNormState> bn;
    bool preactivate = false;
    Conv2d conv;
    Resample resample = Resample::kNone;
  };

  ArchRow row;
  int skip_source = -1;
  std::optional<Conv2d> skip_projection;
  std::vector<std::unique_ptr<Block>> blocks;
  std::vector<ConvUnit> convs;
};

Network::Network() = default;
Network::Network(Network&&) noexcept = default;
Network& Network::operator=(Network&&) noexcept = default;
Network::~Network() = default;

const Parameter* Network::find_parameter(const std::string& name) const {
  for (const Parameter& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

namespace {

BlockKind block_kind(RowKind k) {
  switch (k) {
    case RowKind::kSimple: return BlockKind::kSimple;
    case RowKind::kBasic: return BlockKind::kBasic;
    case RowKind::kBottleneck: return BlockKind::kBottleneck;
    default: throw ConfigError("row kind is not a residual block");
  }
}

bool is_conv_row(RowKind k) { return k == RowKind::kConv3x3 || k == RowKind::kConv1x1; }

}  // namespace

Network build_network(const NetworkConfig& cfg, std::uint64_t seed) {
  validate(cfg);
  Network net;
  net.cfg_ = cfg;
  net.seed_ = seed;
  ParamFactory factory(seed);

  for (std::size_t i = 0; i < cfg.rows.size(); ++i) {
    const ArchRow& row = cfg.rows[i];
    Network::Stage stage;
    stage.row = row;
    stage.skip_source = long_skip_source(cfg, i);
    const std::size_t in_width = row_input_width(cfg, i);
    const Resample first_resample = row_resample(cfg, i);
    if (stage.skip_source >= 0) {
      const std::size_t skip_width = cfg.rows[stage.skip_source].out_width;
      if (skip_width != in_width) {
        stage.skip_projection =
            factory.conv("longskip." + row.name + ".proj", skip_width, in_width, 1);
      }
    }
    for (std::size_t rep = 0; rep < row.repetitions; ++rep) {
      const std::string unit = row.name + ".rep" + std::to_string(rep + 1);
      const std::size_t c_in = rep == 0 ? in_width : row.out_width;
      const Resample resample = rep == 0 ? first_resample : Resample::kNone;
      if (is_conv_row(row.kind)) {
        Network::Stage::ConvUnit cu;
        cu.preactivate = !(i == 0 && rep == 0);
        if (cu.preactivate && cfg.use_batch_norm) cu.bn = factory.batch_norm(unit + ".bn", c_in);
        const std::size_t k = row.kind == RowKind::kConv3x3 ? 3 : 1;
        cu.conv = factory.conv(unit + ".conv", c_in, row.out_width, k,
                               resample == Resample::kDown ? 2 : 1);
        cu.resample = resample;
        stage.convs.push_back(std::move(cu));
      } else {
        BlockOpts opts;
        opts.in_channels = c_in;
        opts.out_channels = row.out_width;
        opts.resample = resample;
        opts.use_batch_norm = cfg.use_batch_norm;
        opts.dropout_rate = cfg.dropout_rate;
        opts.use_short_skip = cfg.short_skips;
        stage.blocks.push_back(make_block(block_kind(row.kind), unit, opts, factory));
      }
    }
    net.stages_.push_back(std::move(stage));
  }
  net.params_ = std::move(factory.parameters());
  net.bns_ = std::move(factory.batch_norms());
  return net;
}

Tensor Network::forward(const Tensor& x, const ForwardContext& ctx,
                        const RowObserver& observer) const {
  if (x.ndim() != 4 || x.dim(1) != cfg_.input_channels || x.dim(2) != cfg_.input_resolution.height ||
      x.dim(3) != cfg_.input_resolution.width) {
    throw DimensionError("network expects N x " + std::to_string(cfg_.input_channels) + " x " +
                         to_string(cfg_.input_resolution) + " input, got " +
                         shape_string(x.shape()));
  }
  std::vector<Tensor> kept(stages_.size());
  Tensor h = x;
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    const Stage& stage = stages_[i];
    if (stage.skip_source >= 0) {
      Tensor skip = kept[stage.skip_source];
      if (stage.skip_projection) skip = (*stage.skip_projection)(skip);
      h = add(h, skip);
    }
    for (const auto& block : stage.blocks) h = block->forward(h, ctx);
    for (const auto& cu : stage.convs) {
      if (cu.preactivate) h = relu(cu.bn ? batch_norm(h, *cu.bn, ctx.mode) : h);
      if (cu.resample == Resample::kUp) h = repeat_upsample(h, 2);
      h = cu.conv(h);
    }
    if (stage.row.role == PathRole::kContracting && cfg_.long_skips) kept[i] = h;
    if (observer) observer(i, h);
  }
  return h;
}

NetworkState Network::state() const {
  NetworkState s;
  for (const Parameter& p : params_) s.parameters.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
  for (const NamedBatchNorm& bn : bns_) {
    s.running_means.push_back(bn.state->running_mean);
    s.running_vars.push_back(bn.state->running_var);
  }
  return s;
}

void Network::load_state(const NetworkState& s) {
  if (s.parameters.size() != params_.size() || s.running_means.size() != bns_.size() ||
      s.running_vars.size() != bns_.size()) {
    throw ContractError("network state does not match this network's layout");
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto dst = params_[i].tensor.data();
    if (dst.size() != s.parameters[i].size()) {
      throw ContractError("network state: size mismatch for " + params_[i].name);
    }
    std::copy(s.parameters[i].begin(), s.parameters[i].end(), dst.begin());
  }
  for (std::size_t i = 0; i < bns_.size(); ++i) {
    bns_[i].state->running_mean = s.running_means[i];
    bns_[i].state->running_var = s.running_vars[i];
  }
}

void Network::zero_grads() {
  for (Parameter& p : params_) p.tensor.zero_grad();
}

Tensor forward_pass(const Network& net, const Tensor& x, Mode mode, Rng& rng) {
  ForwardContext ctx;
  ctx.mode = mode;
  ctx.rng = &rng;
  return net.forward(x, ctx);
}

std::size_t param_count(const Network& net) {
  std::size_t n = 0;
  for (const Parameter& p : net.parameters()) n += p.tensor.numel();
  return n;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kMagic[8] = {'R', 'E', 'S', 'F', 'C', 'N', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

enum class EntryKind : std::uint32_t { kParameter = 0, kRunningMean = 1, kRunningVar = 2 };

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

void put_string(std::string& out, const std::string& s) {
  put<std::uint64_t>(out, s.size());
  out += s;
}

void put_entry(std::string& out, EntryKind kind, const std::string& name, const Shape& shape,
               std::span<const double> values) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(kind));
  put_string(out, name);
  put<std::uint64_t>(out, shape.size());
  for (std::size_t d : shape) put<std::uint64_t>(out, d);
  out.append(reinterpret_cast<const char*>(values.data()), values.size() * sizeof(double));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string get_string() {
    const auto n = get<std::uint64_t>();
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void get_doubles(std::span<double> out) {
    need(out.size() * sizeof(double));
    std::memcpy(out.data(), bytes_.data() + pos_, out.size() * sizeof(double));
    pos_ += out.size() * sizeof(double);
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw IoError("checkpoint truncated");
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string checkpoint_bytes(const Network& net) {
  std::string out(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kVersion);
  put<std::uint64_t>(out, net.seed());
  put_string(out, to_config_text(net.config()));
  const auto& params = net.parameters();
  const auto& bns = net.batch_norms();
  put<std::uint64_t>(out, params.size() + 2 * bns.size());
  for (const Parameter& p : params) {
    put_entry(out, EntryKind::kParameter, p.name, p.tensor.shape(), p.tensor.data());
  }
  for (const NamedBatchNorm& bn : bns) {
    const Shape shape{bn.state->channels()};
    put_entry(out, EntryKind::kRunningMean, bn.name, shape, bn.state->running_mean);
    put_entry(out, EntryKind::kRunningVar, bn.name, shape, bn.state->running_var);
  }
  return out;
}

Network checkpoint_from_bytes(const std::string& bytes) {
  if (bytes.size() < sizeof kMagic || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw IoError("not a checkpoint: bad magic bytes");
  }
  const std::string tail = bytes.substr(sizeof kMagic);
  Reader reader(tail);
  const auto version = reader.get<std::uint32_t>();
  if (version != kVersion) {
    throw IoError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto seed = reader.get<std::uint64_t>();
  Network net = build_network(parse_network_config_text(reader.get_string()), seed);

  const auto n_entries = reader.get<std::uint64_t>();
  std::size_t params_seen = 0;
  for (std::uint64_t e = 0; e < n_entries; ++e) {
    const auto kind = static_cast<EntryKind>(reader.get<std::uint32_t>());
    const std::string name = reader.get_string();
    Shape shape(reader.get<std::uint64_t>());
    for (auto& d : shape) d = reader.get<std::uint64_t>();
    std::vector<double> values(shape_numel(shape));
    reader.get_doubles(values);
    if (kind == EntryKind::kParameter) {
      const Parameter* p = net.find_parameter(name);
      if (!p || p->tensor.shape() != shape) {
        throw IoError("checkpoint parameter " + name + " does not match the echoed config");
      }
      Tensor t = p->tensor;
      std::copy(values.begin(), values.end(), t.data().begin());
      ++params_seen;
    } else {
      bool matched = false;
      for (const NamedBatchNorm& bn : net.batch_norms()) {
        if (bn.name != name || bn.state->channels() != values.size()) continue;
        (kind == EntryKind::kRunningMean ? bn.state->running_mean : bn.state->running_var) = values;
        matched = true;
      }
      if (!matched) throw IoError("checkpoint statistics " + name + " do not match the config");
    }
  }
  if (params_seen != net.parameters().size() || !reader.done()) {
    throw IoError("checkpoint entry count does not match the echoed config");
  }
  return net;
}

void save_checkpoint(const Network& net, const std::string& path) {
  const std::string bytes = checkpoint_bytes(net);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing checkpoint " + path);
}

Network load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return checkpoint_from_bytes(buf.str());
  } catch (const IoError& e) {
    throw IoError(path + ": " + e.what());
  }
}

}  // namespace resfcn
