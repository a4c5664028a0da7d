#ifndef CURRICUBENCH_TRAINER_HPP_
#define CURRICUBENCH_TRAINER_HPP_

#include "curricubench/checkpoint.hpp"
#include "curricubench/optimizer.hpp"

namespace curricubench {

// One pretext or classification task being trained. A runner owns its model
// state (built from an incoming checkpoint) and consumes data it was
// constructed over; train_epoch returns the mean batch loss.
class TaskRunner {
 public:
  virtual ~TaskRunner() = default;

  virtual double train_epoch(std::size_t epoch_index, nn::Optimizer& opt) = 0;

  // Task performance where one exists (validation balanced accuracy for
  // classification, self-label accuracy for rotation/relloc); NaN otherwise.
  virtual double eval_metric() { return std::nan(""); }

  virtual Checkpoint to_checkpoint() const = 0;
};

}  // namespace curricubench

#endif  // CURRICUBENCH_TRAINER_HPP_
