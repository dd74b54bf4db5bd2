#pragma once

namespace affreal::cli {

/// Exit codes: 0 success, 1 mathematical rejection, 2 input error.
int run(int argc, char** argv);

}  // namespace affreal::cli
