#pragma once

#include <stdexcept>
#include <string>

namespace revdeq {

// Base class for all library errors so callers can catch revdeq::error.
class error : public std::runtime_error {
public:
    explicit error(const std::string& msg) : std::runtime_error(msg) {}
};

class shape_error : public error {
public:
    explicit shape_error(const std::string& msg) : error(msg) {}
};

class precision_error : public error {
public:
    explicit precision_error(const std::string& msg) : error(msg) {}
};

class config_error : public error {
public:
    explicit config_error(const std::string& msg) : error(msg) {}
};

class domain_error : public error {
public:
    explicit domain_error(const std::string& msg) : error(msg) {}
};

class io_error : public error {
public:
    explicit io_error(const std::string& msg) : error(msg) {}
};

}  // namespace revdeq
