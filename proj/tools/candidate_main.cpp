// Candidate protocol runner. The sandbox invokes this as a child process:
//   evorec-candidate <entrypoint> --phase P --data DIR --out DIR --config FILE
// All outcomes, including argument errors, are reported through the manifest
// plus the exit code; nothing here is allowed to take down the orchestrator.
#include <cstdio>
#include <string>

#include "evorec/candidate.hpp"

int main(int argc, char** argv) {
  evorec::RunnerArgs args;
  if (argc >= 2) args.entrypoint = argv[1];
  for (int i = 2; i + 1 < argc; i += 2) {
    std::string flag = argv[i];
    std::string value = argv[i + 1];
    if (flag == "--phase") args.phase = value;
    else if (flag == "--data") args.data_dir = value;
    else if (flag == "--out") args.out_dir = value;
    else if (flag == "--config") args.config_file = value;
    else {
      fprintf(stderr, "unknown flag: %s\n", flag.c_str());
      return 2;
    }
  }
  if (args.entrypoint.empty() || args.phase.empty() || args.data_dir.empty() ||
      args.out_dir.empty() || args.config_file.empty()) {
    fprintf(stderr,
            "usage: evorec-candidate <entrypoint> --phase P --data DIR --out DIR --config FILE\n");
    return 2;
  }
  try {
    return evorec::run_candidate_phase(args);
  } catch (const std::exception& e) {
    fprintf(stderr, "%s\n", e.what());
    return 1;
  }
}
