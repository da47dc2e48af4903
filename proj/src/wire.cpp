#include "diffsens/wire.hpp"

#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>

#include <json.hpp>

#include "diffsens/errors.hpp"
#include "diffsens/score_source.hpp"

namespace diffsens::wire {

using nlohmann::json;

namespace {

void append_rows(std::string& out, const Batch& m) {
  out.push_back('[');
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    if (i) out.push_back(',');
    out.push_back('[');
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) out.push_back(',');
      out += format_double(m(i, j));
    }
    out.push_back(']');
  }
  out.push_back(']');
}

json parse_line(const std::string& line) {
  try {
    return json::parse(line);
  } catch (const json::parse_error&) {
    throw TransportError("reply is not valid JSON", line);
  }
}

Batch to_batch(const json& rows, const std::string& line, Eigen::Index expect_rows,
               Eigen::Index expect_cols) {
  if (!rows.is_array()) throw TransportError("expected an array of rows", line);
  const auto n = static_cast<Eigen::Index>(rows.size());
  if (expect_rows >= 0 && n != expect_rows) throw TransportError("row count mismatch", line);
  if (n == 0) throw TransportError("empty batch", line);
  const auto d = static_cast<Eigen::Index>(rows[0].is_array() ? rows[0].size() : 0);
  if (expect_cols >= 0 && d != expect_cols) throw TransportError("dimension mismatch", line);
  Batch out(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const json& row = rows[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != d) {
      throw TransportError("ragged batch", line);
    }
    for (Eigen::Index j = 0; j < d; ++j) {
      const json& v = row[static_cast<std::size_t>(j)];
      if (!v.is_number()) throw TransportError("non-numeric entry", line);
      out(i, j) = v.get<double>();
    }
  }
  return out;
}

}  // namespace

std::string format_double(double x) {
  if (!std::isfinite(x)) return "null";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string hello(Eigen::Index dim) {
  return "{\"op\":\"hello\",\"dim\":" + std::to_string(dim) + "}";
}

std::string score_request(double s, const Batch& z) {
  std::string out = "{\"op\":\"score\",\"t\":" + format_double(s) + ",\"z\":";
  append_rows(out, z);
  out.push_back('}');
  return out;
}

std::string score_reply(const Batch& values) {
  std::string out = "{\"op\":\"score\",\"values\":";
  append_rows(out, values);
  out.push_back('}');
  return out;
}

std::string shutdown() { return "{\"op\":\"shutdown\"}"; }

Request parse_request(const std::string& line) {
  const json j = parse_line(line);
  if (!j.is_object() || !j.contains("op") || !j["op"].is_string()) {
    throw TransportError("message without op", line);
  }
  const std::string op = j["op"].get<std::string>();
  Request req;
  if (op == "hello") {
    req.op = Request::Op::hello;
    if (!j.contains("dim") || !j["dim"].is_number_integer()) throw TransportError("hello without dim", line);
    req.dim = j["dim"].get<Eigen::Index>();
    if (req.dim <= 0) throw TransportError("hello with non-positive dim", line);
  } else if (op == "score") {
    req.op = Request::Op::score;
    if (!j.contains("t") || !j["t"].is_number()) throw TransportError("score request without t", line);
    req.t = j["t"].get<double>();
    if (!std::isfinite(req.t)) throw TransportError("score request with non-finite t", line);
    if (!j.contains("z")) throw TransportError("score request without z", line);
    req.z = to_batch(j["z"], line, -1, -1);
  } else if (op == "shutdown") {
    req.op = Request::Op::shutdown;
  } else {
    throw TransportError("unknown op", line);
  }
  return req;
}

Eigen::Index parse_hello(const std::string& line) {
  const Request r = parse_request(line);
  if (r.op != Request::Op::hello) throw TransportError("expected hello", line);
  return r.dim;
}

Batch parse_score_reply(const std::string& line, Eigen::Index rows, Eigen::Index dim) {
  const json j = parse_line(line);
  if (!j.is_object() || j.value("op", std::string{}) != "score" || !j.contains("values")) {
    throw TransportError("malformed score reply", line);
  }
  return to_batch(j["values"], line, rows, dim);
}

int serve(std::istream& in, std::ostream& out, std::ostream& err, const ScoreSource& source) {
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      const Request req = parse_request(line);
      switch (req.op) {
        case Request::Op::hello:
          out << hello(source.dim()) << '\n' << std::flush;
          break;
        case Request::Op::score:
          if (req.z.cols() != source.dim()) throw TransportError("dimension mismatch", line);
          out << score_reply(source.score_batch(req.t, req.z)) << '\n' << std::flush;
          break;
        case Request::Op::shutdown:
          return 0;
      }
    } catch (const Error& e) {
      err << "score server: " << e.what() << '\n';
      return 1;
    }
  }
  return 0;
}

}  // namespace diffsens::wire
