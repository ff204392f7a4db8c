// SPDX-License-Identifier: Apache-2.0
#include "chatqe/cli.hpp"

int main(int argc, char** argv) { return chatqe::cli::run(argc, argv); }
