// Batch front end: simulate, ingest, associate, enrich, fingerprint,
// distmatrix, register, report, export.
#pragma once

#include <ostream>

#include "beamlink/error.hpp"

namespace beamlink::cli {

/// Exit statuses.
inline constexpr int kExitOk = 0;
inline constexpr int kExitOther = 1;
inline constexpr int kExitConfig = 2;    // usage errors and invalid configuration
inline constexpr int kExitMissing = 3;   // missing input file or store
inline constexpr int kExitCoverage = 4;  // fingerprints lack populated bins
inline constexpr int kExitBusy = 5;      // store locked by another writer
inline constexpr int kExitData = 6;      // corrupt or inconsistent data

int exit_code(ErrorKind kind);

/// Runs one subcommand. Normal output goes to `out`; failures print a single
/// line `error: kind=<kind> message="<text>"` to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace beamlink::cli
