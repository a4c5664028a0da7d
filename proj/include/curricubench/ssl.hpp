#ifndef CURRICUBENCH_SSL_HPP_
#define CURRICUBENCH_SSL_HPP_

#include <memory>
#include <optional>

#include "curricubench/augment.hpp"
#include "curricubench/backbone.hpp"
#include "curricubench/data.hpp"
#include "curricubench/losses.hpp"
#include "curricubench/trainer.hpp"

namespace curricubench::ssl {

// ---------------------------------------------------------------------------
// Rotation prediction
// ---------------------------------------------------------------------------

struct RotationBatch {
  Tensor images;                      // [B,1,S,S], values in [0,1]
  std::vector<std::uint8_t> targets;  // k in {0..3}: rotation by k*90 deg CCW
};

RotationBatch make_rotation_batch(const std::vector<const ImageU8*>& images, Rng& rng);

// ---------------------------------------------------------------------------
// Relative location
// ---------------------------------------------------------------------------

struct RelLocParams {
  std::size_t gap = 2;
  std::size_t jitter = 1;
};

struct RelLocBatch {
  Tensor center_patches;    // [B,1,P,P]
  Tensor neighbor_patches;  // [B,1,P,P]
  std::vector<std::uint8_t> targets;  // 0..7 row-major over the 3x3 grid, center skipped
};

struct RelLocGeometry {
  std::size_t patch;   // patch side = floor(side/3) - gap
  std::size_t origin;  // top-left of the 3x3 grid (both axes)
  std::size_t step;    // patch + gap
};

RelLocGeometry relloc_geometry(std::size_t side, std::size_t gap);

// Neighbor-cell <-> target enumeration: top-left=0, top=1, top-right=2,
// left=3, right=4, bottom-left=5, bottom=6, bottom-right=7.
std::uint8_t relloc_target(std::size_t cell_r, std::size_t cell_c);
std::pair<std::size_t, std::size_t> relloc_cell(std::uint8_t target);

RelLocBatch make_relloc_batch(const std::vector<const ImageU8*>& images,
                              const RelLocParams& params, Rng& rng);

// ---------------------------------------------------------------------------
// MoCo v2
// ---------------------------------------------------------------------------

struct MocoConfig {
  double temperature = 0.2;
  std::size_t queue_capacity = 256;
  double encoder_momentum = 0.99;
  std::size_t proj_dim = 32;
};

// FIFO ring of unit-norm key vectors.
class KeyQueue {
 public:
  KeyQueue(std::size_t capacity, std::size_t dim);

  std::size_t capacity() const { return capacity_; }
  std::size_t dim() const { return dim_; }
  std::size_t size() const { return size_; }
  bool full() const { return size_ == capacity_; }

  // Enqueues rows of [N,dim]; oldest entries are evicted once full. Every
  // key must be unit-norm within 1e-5.
  void push(const Tensor& keys);

  // All stored keys, oldest first. Throws StateError when empty.
  Tensor negatives() const;

 private:
  std::size_t capacity_, dim_, head_ = 0, size_ = 0;
  std::vector<float> buf_;
};

struct SwavConfig {
  std::size_t prototypes = 32;
  double epsilon = 0.05;
  std::size_t sinkhorn_iters = 3;
  double temperature = 0.1;
  std::size_t proj_dim = 32;
};

// Backbone + 2-layer projection MLP shared by the contrastive tasks.
struct ProjectionNet {
  nn::BackboneNet<float> backbone;
  nn::Linear<float> fc1, fc2;
  nn::ReLU<float> relu;

  ProjectionNet(const nn::BackboneConfig& cfg, std::size_t proj_dim)
      : backbone(cfg), fc1(cfg.embedding_dim(), cfg.embedding_dim()),
        fc2(cfg.embedding_dim(), proj_dim) {}

  Tensor forward(const Tensor& batch, nn::Mode mode) {
    const auto features = backbone.forward(batch, mode);
    return fc2.forward(relu.forward(fc1.forward(features.embedding)));
  }

  void backward(const Tensor& dz) {
    const Tensor demb = fc1.backward(relu.backward(fc2.backward(dz)));
    backbone.backward({}, demb);
  }

  std::vector<nn::NamedParam<float>> named_params() {
    auto out = backbone.named_params();
    nn::linear_params(out, "head.proj.fc1", fc1);
    nn::linear_params(out, "head.proj.fc2", fc2);
    return out;
  }
};

// One swapped-prediction evaluation: Sinkhorn targets from each view's
// scores (gradient-blocked), symmetrized cross-entropy, gradients for both
// raw projections and the prototypes. DegenerateBatchError at B = 1.
nn::SwavLossGrad<float> swav_view_loss(const Tensor& z_a, const Tensor& z_b,
                                       const Tensor& prototypes, const SwavConfig& cfg);

// ---------------------------------------------------------------------------
// Task runners (one training step = one batch; epochs shuffle the dataset)
// ---------------------------------------------------------------------------

struct SslRunnerEnv {
  const data::Dataset* train = nullptr;
  nn::BackboneConfig backbone;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
  RelLocParams relloc;
  MocoConfig moco;
  SwavConfig swav;
  AugmentConfig augment;
};

std::unique_ptr<TaskRunner> make_rotation_runner(const Checkpoint& init,
                                                 const SslRunnerEnv& env);
std::unique_ptr<TaskRunner> make_relloc_runner(const Checkpoint& init,
                                               const SslRunnerEnv& env);
std::unique_ptr<TaskRunner> make_moco_runner(const Checkpoint& init,
                                             const SslRunnerEnv& env);
std::unique_ptr<TaskRunner> make_swav_runner(const Checkpoint& init,
                                             const SslRunnerEnv& env);

// Dispatch by task id in {rotation, relloc, moco, swav}; TaskError otherwise.
std::unique_ptr<TaskRunner> make_ssl_runner(const std::string& task,
                                            const Checkpoint& init,
                                            const SslRunnerEnv& env);

}  // namespace curricubench::ssl

#endif  // CURRICUBENCH_SSL_HPP_
