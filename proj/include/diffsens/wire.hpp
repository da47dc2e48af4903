#pragma once

#include <iosfwd>
#include <string>

#include "diffsens/types.hpp"

namespace diffsens {

class ScoreSource;

// Newline-delimited JSON protocol spoken by external score processes.
//
//   -> {"op":"hello","dim":d}                    <- {"op":"hello","dim":d}
//   -> {"op":"score","t":s,"z":[[...],...]}      <- {"op":"score","values":[[...],...]}
//   -> {"op":"shutdown"}                         <- process exits with status 0
//
// Numbers are written with 17 significant digits, which round-trips every
// finite double exactly. Non-finite values are written as null and rejected
// by the reader.
namespace wire {

std::string format_double(double x);

std::string hello(Eigen::Index dim);
std::string score_request(double s, const Batch& z);
std::string score_reply(const Batch& values);
std::string shutdown();

struct Request {
  enum class Op { hello, score, shutdown };
  Op op = Op::hello;
  Eigen::Index dim = 0;
  double t = 0.0;
  Batch z;
};

// Throws TransportError carrying the raw line on malformed input.
Request parse_request(const std::string& line);
Eigen::Index parse_hello(const std::string& line);
Batch parse_score_reply(const std::string& line, Eigen::Index rows, Eigen::Index dim);

// Server loop over a line stream: answers requests with `source` until
// shutdown or end of input. Returns the process exit status (0 on clean
// shutdown, 1 on a protocol error, which is reported on `err`).
int serve(std::istream& in, std::ostream& out, std::ostream& err, const ScoreSource& source);

}  // namespace wire
}  // namespace diffsens
