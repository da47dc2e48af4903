#pragma once

namespace diffsens {

// Exit status: 0 success, 1 transport or I/O failure, 2 config or usage
// error, 3 numerical failure.
int cli_main(int argc, char** argv);

}  // namespace diffsens
