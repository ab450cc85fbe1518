#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace poseguide::checks {

struct CheckResult {
  std::string module;   // owning module, e.g. "guidance_net"
  std::string name;     // invariant name, e.g. "transparency"
  bool passed = false;
  std::string witness;  // failure witness values, or brief stats on pass
};

struct CheckOptions {
  std::uint64_t seed = 2024;
  // The toy-training check runs two full 200-step trainings; callers on
  // a tight loop can skip it.
  bool include_training = true;
};

// The acceptance-criteria property checks, one group per criterion.
std::vector<CheckResult> check_transparency(const CheckOptions& opt);        // criterion 1
std::vector<CheckResult> check_telescoping(const CheckOptions& opt);         // criterion 2
std::vector<CheckResult> check_propagation_oracle(const CheckOptions& opt);  // criterion 3
std::vector<CheckResult> check_watershed_oracle(const CheckOptions& opt);    // criterion 4
std::vector<CheckResult> check_correspondence(const CheckOptions& opt);      // criterion 5
std::vector<CheckResult> check_gradients(const CheckOptions& opt);           // criterion 6
std::vector<CheckResult> check_toy_training(const CheckOptions& opt);        // criterion 7
std::vector<CheckResult> check_format_fidelity(const CheckOptions& opt);     // criterion 8

// Everything above, in criterion order.
std::vector<CheckResult> run_all_checks(const CheckOptions& opt = {});

}  // namespace poseguide::checks
