#pragma once

#include <string>

#include "mtda/trainer.hpp"

namespace mtda {

// Self-describing binary dump of the model parameters, optimizer states and
// step counter. save -> load -> save round-trips byte-identically.
void save_checkpoint(const std::string& path, const TrainState& state, OptimizerKind optimizer);

struct LoadedCheckpoint {
    TrainState state;
    OptimizerKind optimizer = OptimizerKind::adam;
};
LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace mtda
