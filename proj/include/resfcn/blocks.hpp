#pragma once

#include <memory>
#include <optional>
#include <string>

#include "resfcn/layers.hpp"

namespace resfcn {

enum class Resample { kNone, kDown, kUp };
enum class BlockKind { kSimple, kBasic, kBottleneck };

const char* to_string(Resample r);
const char* to_string(BlockKind k);

struct BlockOpts {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  Resample resample = Resample::kNone;
  bool use_batch_norm = true;
  double dropout_rate = 0.0;
  bool use_short_skip = true;
};

/// Per-pass settings shared by every block. `dropout_override`, when set,
/// activates dropout at that rate even in eval mode (Monte-Carlo sampling).
struct ForwardContext {
  Mode mode = Mode::kEval;
  Rng* rng = nullptr;
  std::optional<double> dropout_override;

  Tensor apply_dropout(const Tensor& x, double configured_rate) const;
};

/// Short-skip path: identity unless resolution or width differ, in which
/// case decimation/repetition comes first and a 1x1 convolution second.
class Shortcut {
 public:
  Shortcut(const std::string& name, const BlockOpts& opts, ParamFactory& factory);
  Tensor operator()(const Tensor& x) const;
  bool is_identity() const { return resample_ == Resample::kNone && !projection_; }

 private:
  Resample resample_;
  std::optional<Conv2d> projection_;
};

class Block {
 public:
  explicit Block(const BlockOpts& opts);
  virtual ~Block() = default;

  Tensor forward(const Tensor& x, const ForwardContext& ctx) const;
  const BlockOpts& opts() const { return opts_; }

 protected:
  virtual Tensor residual(const Tensor& x, const ForwardContext& ctx) const = 0;
  // [BN] -> ReLU
  Tensor preactivate(const Tensor& x, const std::shared_ptr<BatchNormState>& bn,
                     const ForwardContext& ctx) const;
  // 2x repetition when the block upsamples; sits just before the final conv.
  Tensor upsample(const Tensor& x) const;
  void init_shortcut(const std::string& name, ParamFactory& factory);

  BlockOpts opts_;
  std::optional<Shortcut> shortcut_;
};

/// [BN] -> ReLU -> [repeat when up] -> conv3x3 (stride 2 when down) -> [dropout]
class SimpleBlock final : public Block {
 public:
  SimpleBlock(const std::string& name, const BlockOpts& opts, ParamFactory& factory);

 private:
  Tensor residual(const Tensor& x, const ForwardContext& ctx) const override;
  std::shared_ptr<BatchNormState> bn_;
  Conv2d conv_;
};

/// Two pre-activated conv3x3 stages with dropout between them.
class BasicBlock final : public Block {
 public:
  BasicBlock(const std::string& name, const BlockOpts& opts, ParamFactory& factory);

 private:
  Tensor residual(const Tensor& x, const ForwardContext& ctx) const override;
  std::shared_ptr<BatchNormState> bn1_, bn2_;
  Conv2d conv1_, conv2_;
};

/// Pre-activated 1x1 -> 3x3 -> 1x1 with internal width out/4; dropout after
/// the 3x3 stage.
class BottleneckBlock final : public Block {
 public:
  BottleneckBlock(const std::string& name, const BlockOpts& opts, ParamFactory& factory);
  static std::size_t inner_width(std::size_t out_channels);

 private:
  Tensor residual(const Tensor& x, const ForwardContext& ctx) const override;
  std::shared_ptr<BatchNormState> bn1_, bn2_, bn3_;
  Conv2d conv1_, conv2_, conv3_;
};

std::unique_ptr<Block> make_block(BlockKind kind, const std::string& name, const BlockOpts& opts,
                                  ParamFactory& factory);

}  // namespace resfcn
