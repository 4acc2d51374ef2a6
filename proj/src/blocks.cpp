#include "resfcn/blocks.hpp"

#include <stdexcept>

#include "resfcn/errors.hpp"

namespace resfcn {

const char* to_string(Resample r) {
  switch (r) {
    case Resample::kNone: return "none";
    case Resample::kDown: return "down";
    case Resample::kUp: return "up";
  }
  return "?";
}

const char* to_string(BlockKind k) {
  switch (k) {
    case BlockKind::kSimple: return "simple";
    case BlockKind::kBasic: return "basic";
    case BlockKind::kBottleneck: return "bottleneck";
  }
  return "?";
}

Tensor ForwardContext::apply_dropout(const Tensor& x, double configured_rate) const {
  const double rate = dropout_override.value_or(configured_rate);
  if (rate == 0.0 || (mode == Mode::kEval && !dropout_override)) return x;
  if (!rng) throw ContractError("dropout requested without a generator in the forward context");
  const Mode m = dropout_override ? Mode::kTrain : mode;
  return dropout(x, rate, m, *rng);
}

Shortcut::Shortcut(const std::string& name, const BlockOpts& opts, ParamFactory& factory)
    : resample_(opts.resample) {
  if (opts.in_channels != opts.out_channels) {
    projection_ = factory.conv(name + ".proj", opts.in_channels, opts.out_channels, 1);
  }
}

Tensor Shortcut::operator()(const Tensor& x) const {
  Tensor y = x;
  if (resample_ == Resample::kDown) y = decimate_downsample(y, 2);
  if (resample_ == Resample::kUp) y = repeat_upsample(y, 2);
  if (projection_) y = (*projection_)(y);
  return y;
}

Block::Block(const BlockOpts& opts) : opts_(opts) {
  if (opts.in_channels == 0 || opts.out_channels == 0) {
    throw ConfigError("block channels must be positive");
  }
  if (!(opts.dropout_rate >= 0.0 && opts.dropout_rate < 1.0)) {
    throw ConfigError("block dropout rate must lie in [0, 1)");
  }
}

void Block::init_shortcut(const std::string& name, ParamFactory& factory) {
  if (opts_.use_short_skip) shortcut_.emplace(name + ".shortcut", opts_, factory);
}

Tensor Block::forward(const Tensor& x, const ForwardContext& ctx) const {
  Tensor out = residual(x, ctx);
  if (!shortcut_) return out;
  Tensor skip = (*shortcut_)(x);
  if (skip.shape() != out.shape()) {
    throw std::logic_error("block invariant violated: residual " + shape_string(out.shape()) +
                           " vs shortcut " + shape_string(skip.shape()));
  }
  return add(out, skip);
}

Tensor Block::preactivate(const Tensor& x, const std::shared_ptr<BatchNormState>& bn,
                          const ForwardContext& ctx) const {
  return relu(bn ? batch_norm(x, *bn, ctx.mode) : x);
}

Tensor Block::upsample(const Tensor& x) const {
  return opts_.resample == Resample::kUp ? repeat_upsample(x, 2) : x;
}

namespace {
std::size_t stride_for(Resample r) { return r == Resample::kDown ? 2 : 1; }
}  // namespace

SimpleBlock::SimpleBlock(const std::string& name, const BlockOpts& opts, ParamFactory& factory)
    : Block(opts) {
  if (opts.use_batch_norm) bn_ = factory.batch_norm(name + ".bn1", opts.in_channels);
  conv_ = factory.conv(name + ".conv1", opts.in_channels, opts.out_channels, 3,
                       stride_for(opts.resample));
  init_shortcut(name, factory);
}

Tensor SimpleBlock::residual(const Tensor& x, const ForwardContext& ctx) const {
  Tensor h = conv_(upsample(preactivate(x, bn_, ctx)));
  return ctx.apply_dropout(h, opts_.dropout_rate);
}

BasicBlock::BasicBlock(const std::string& name, const BlockOpts& opts, ParamFactory& factory)
    : Block(opts) {
  if (opts.use_batch_norm) bn1_ = factory.batch_norm(name + ".bn1", opts.in_channels);
  conv1_ = factory.conv(name + ".conv1", opts.in_channels, opts.out_channels, 3,
                        stride_for(opts.resample));
  if (opts.use_batch_norm) bn2_ = factory.batch_norm(name + ".bn2", opts.out_channels);
  conv2_ = factory.conv(name + ".conv2", opts.out_channels, opts.out_channels, 3);
  init_shortcut(name, factory);
}

Tensor BasicBlock::residual(const Tensor& x, const ForwardContext& ctx) const {
  Tensor h = conv1_(preactivate(x, bn1_, ctx));
  h = ctx.apply_dropout(h, opts_.dropout_rate);
  return conv2_(upsample(preactivate(h, bn2_, ctx)));
}

std::size_t BottleneckBlock::inner_width(std::size_t out_channels) {
  if (out_channels % 4 != 0) {
    throw ConfigError("bottleneck output width " + std::to_string(out_channels) +
                      " is not divisible by 4");
  }
  return out_channels / 4;
}

BottleneckBlock::BottleneckBlock(const std::string& name, const BlockOpts& opts,
                                 ParamFactory& factory)
    : Block(opts) {
  const std::size_t inner = inner_width(opts.out_channels);
  if (opts.use_batch_norm) bn1_ = factory.batch_norm(name + ".bn1", opts.in_channels);
  conv1_ = factory.conv(name + ".conv1", opts.in_channels, inner, 1, stride_for(opts.resample));
  if (opts.use_batch_norm) bn2_ = factory.batch_norm(name + ".bn2", inner);
  conv2_ = factory.conv(name + ".conv2", inner, inner, 3);
  if (opts.use_batch_norm) bn3_ = factory.batch_norm(name + ".bn3", inner);
  conv3_ = factory.conv(name + ".conv3", inner, opts.out_channels, 1);
  init_shortcut(name, factory);
}

Tensor BottleneckBlock::residual(const Tensor& x, const ForwardContext& ctx) const {
  Tensor h = conv1_(preactivate(x, bn1_, ctx));
  h = conv2_(preactivate(h, bn2_, ctx));
  h = ctx.apply_dropout(h, opts_.dropout_rate);
  return conv3_(upsample(preactivate(h, bn3_, ctx)));
}

std::unique_ptr<Block> make_block(BlockKind kind, const std::string& name, const BlockOpts& opts,
                                  ParamFactory& factory) {
  switch (kind) {
    case BlockKind::kSimple: return std::make_unique<SimpleBlock>(name, opts, factory);
    case BlockKind::kBasic: return std::make_unique<BasicBlock>(name, opts, factory);
    case BlockKind::kBottleneck: return std::make_unique<BottleneckBlock>(name, opts, factory);
  }
  throw ConfigError("unknown block kind");
}

}  // namespace resfcn
