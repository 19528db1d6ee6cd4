#pragma once

#include <stdexcept>
#include <string>

namespace cxrtutor {

// Base for every error the engine raises. Each subclass is one error kind
// named by the module contracts; callers catch the specific kind they handle.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// core-domain
class MissingFile : public Error {
public:
    using Error::Error;
};
class MalformedSidecar : public Error {
public:
    using Error::Error;
};
class InvariantViolation : public Error {
public:
    using Error::Error;
};

// focus-gate
class ZeroAreaBox : public Error {
public:
    using Error::Error;
};
class ZeroDistance : public Error {
public:
    using Error::Error;
};

// gaze-analytics
class OutOfBoundsFixation : public Error {
public:
    using Error::Error;
};

// mastery-bkt
class SkillMismatch : public Error {
public:
    using Error::Error;
};

// backends
class BackendTimeout : public Error {
public:
    using Error::Error;
};
class BackendHttpError : public Error {
public:
    BackendHttpError(int status, const std::string& what)
        : Error(what), status_(status) {}
    int status() const noexcept { return status_; }

private:
    int status_;
};
class BackendMisconfigured : public Error {
public:
    using Error::Error;
};
class ImageTooLarge : public Error {
public:
    using Error::Error;
};
class PreconditionViolation : public Error {
public:
    using Error::Error;
};

// tutor-agents
class ParseFailure : public Error {
public:
    using Error::Error;
};

// knowledge-retrieval
class UpstreamHttpError : public Error {
public:
    using Error::Error;
};
class UnknownSkill : public Error {
public:
    using Error::Error;
};

// case-similarity
class DuplicateCaseId : public Error {
public:
    using Error::Error;
};
class UnknownCase : public Error {
public:
    using Error::Error;
};
class UnknownLabel : public Error {
public:
    using Error::Error;
};
class ImageWriteError : public Error {
public:
    using Error::Error;
};

// orchestrator
class SessionCompleted : public Error {
public:
    using Error::Error;
};
class TurnIndexMismatch : public Error {
public:
    using Error::Error;
};
class CorruptLog : public Error {
public:
    CorruptLog(std::size_t line, const std::string& what)
        : Error("corrupt event log at line " + std::to_string(line) + ": " + what),
          line_(line) {}
    std::size_t line_number() const noexcept { return line_; }

private:
    std::size_t line_;
};

}  // namespace cxrtutor
