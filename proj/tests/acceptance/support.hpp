#pragma once

namespace invreg_acceptance {

// Runs the acceptance criteria (all, or one selected with --criterion N) and
// prints one pass/fail line per criterion. Returns a nonzero exit code when
// any executed criterion fails.
int run(int argc, char** argv);

}  // namespace invreg_acceptance
