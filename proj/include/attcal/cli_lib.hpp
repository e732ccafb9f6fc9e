#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace attcal {

// Entry point used by both the binary and the tests. `args` excludes the
// program name. Returns the process exit status: 0 on success (including runs
// where individual estimator cells failed and were recorded as such), nonzero
// on configuration or I/O errors.
int run_cli(const std::vector<std::string>& args);

// 64-bit FNV-1a hash of a byte string; used to stamp reports with a
// fingerprint of the effective configuration.
std::uint64_t fnv1a_hash(const std::string& s);

// Shortest decimal representation that round-trips the value ('.' decimal
// separator, locale independent). NaN renders as an empty string so CSV cells
// for failed estimates stay blank.
std::string format_double(double v);

}  // namespace attcal
