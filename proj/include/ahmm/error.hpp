#pragma once

#include <stdexcept>
#include <string>

namespace ahmm {

// Error taxonomy shared by the library and the CLI exit-code mapping:
//   usage -> 1, data/hierarchy/parse -> 2, model_evidence -> 3.
enum class Errc {
  usage,           // bad caller input (unknown state, level out of range, ...)
  parse,           // malformed file content
  hierarchy,       // structural defect hit at runtime (empty child set, ...)
  zero_evidence,   // conditioning event has probability zero
  model_evidence,  // the whole filter became inconsistent with the evidence
};

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Errc code() const { return code_; }

 private:
  Errc code_;
};

// Zero-probability evidence. The exact filter lets this propagate; a particle
// catches it and dies instead.
class ZeroEvidence : public Error {
 public:
  explicit ZeroEvidence(const std::string& what) : Error(Errc::zero_evidence, what) {}
};

[[noreturn]] inline void throw_usage(const std::string& what) { throw Error(Errc::usage, what); }
[[noreturn]] inline void throw_parse(const std::string& what) { throw Error(Errc::parse, what); }
[[noreturn]] inline void throw_hierarchy(const std::string& what) { throw Error(Errc::hierarchy, what); }

}  // namespace ahmm
