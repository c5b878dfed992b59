/*
 * Copyright 2026 The sdfmap Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef SDFMAP_ERRORS_HPP
#define SDFMAP_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace sdfmap {

// Base of every error thrown by the library. The CLI maps these to exit
// code 1 (domain failure) or 2 (usage/parse), see tools/.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Malformed input text. Carries 1-based line/column when known (0 = unknown).
class SyntaxError : public Error {
public:
    SyntaxError(const std::string& what, int line = 0, int column = 0)
        : Error(format(what, line, column)), line_(line), column_(column) {}
    int line() const { return line_; }
    int column() const { return column_; }

private:
    static std::string format(const std::string& what, int line, int column) {
        if (line <= 0) return what;
        return what + " (line " + std::to_string(line) + ", column " +
               std::to_string(column) + ")";
    }
    int line_ = 0;
    int column_ = 0;
};

// Well-formed input that violates a structural rule (dangling actor
// reference, nonpositive rate, duplicate id, ...).
class SemanticError : public Error {
public:
    using Error::Error;
};

// sdfgraph
class InconsistentGraphError : public Error {
public:
    using Error::Error;
};
class RecursiveHierarchyError : public Error {
public:
    using Error::Error;
};
class InterfaceRateMismatchError : public Error {
public:
    using Error::Error;
};
class CyclicDependencyError : public Error {
public:
    using Error::Error;
};
class NoSingleAppearanceScheduleError : public Error {
public:
    NoSingleAppearanceScheduleError(const std::string& what, std::string partial)
        : Error(what), partial_(std::move(partial)) {}
    const std::string& partial_expression() const { return partial_; }

private:
    std::string partial_;
};

// archmodel
class UnknownPresetError : public Error {
public:
    using Error::Error;
};

// scheduler
class MissingTimingError : public Error {
public:
    using Error::Error;
};
class UnschedulableConstraintError : public Error {
public:
    using Error::Error;
};
class CapacityExceededError : public Error {
public:
    using Error::Error;
};

// simcore
class InvalidScheduleError : public Error {
public:
    using Error::Error;
};

// runtime
class AddressNotPublishedError : public Error {
public:
    using Error::Error;
};
class BarrierNotReachedError : public Error {
public:
    using Error::Error;
};
class UnregisteredKernelError : public Error {
public:
    using Error::Error;
};
class DeadlockError : public Error {
public:
    using Error::Error;
};

// rachpd
class InvalidRootError : public Error {
public:
    using Error::Error;
};
class DelayOutOfRangeError : public Error {
public:
    using Error::Error;
};
class StreamTooShortError : public Error {
public:
    using Error::Error;
};
class LengthMismatchError : public Error {
public:
    using Error::Error;
};

}  // namespace sdfmap

#endif
