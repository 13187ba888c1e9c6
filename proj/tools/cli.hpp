#pragma once

namespace towerlab::cli {

// Exit codes: 0 success, 1 input/config errors, 2 invariant violations.
int run(int argc, char** argv);

}  // namespace towerlab::cli
