#ifndef VSHUFFLE_CLI_HPP
#define VSHUFFLE_CLI_HPP

#include <iosfwd>
#include <string>
#include <vector>

namespace vshuffle {

// Exit codes returned by cli_main.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;    // bad subcommand, flag or flag value
inline constexpr int kExitRuntime = 2;  // I/O failure, failed check, ...

// `args` excludes the program name.
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace vshuffle

#endif  // VSHUFFLE_CLI_HPP
