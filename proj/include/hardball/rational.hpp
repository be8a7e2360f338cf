#ifndef HARDBALL_RATIONAL_HPP
#define HARDBALL_RATIONAL_HPP

#include <cstdint>
#include <numeric>
#include <string>

#include "hardball/errors.hpp"

namespace hardball {

/// Exact rational arithmetic on 64-bit integers. Overflow is detected and
/// reported instead of wrapping; that bounds the usable range but keeps every
/// produced value exact.
class Rational {
public:
    Rational() : num_(0), den_(1) {}
    Rational(std::int64_t n) : num_(n), den_(1) {} // NOLINT: implicit by design
    Rational(std::int64_t n, std::int64_t d) : num_(n), den_(d) {
        if (den_ == 0) throw DomainError("rational with zero denominator");
        normalize();
    }

    std::int64_t num() const { return num_; }
    std::int64_t den() const { return den_; }

    double to_double() const {
        return static_cast<double>(num_) / static_cast<double>(den_);
    }

    std::string str() const {
        if (den_ == 1) return std::to_string(num_);
        return std::to_string(num_) + "/" + std::to_string(den_);
    }

    friend Rational operator+(const Rational& x, const Rational& y) {
        return Rational(add_checked(mul_checked(x.num_, y.den_),
                                    mul_checked(y.num_, x.den_)),
                        mul_checked(x.den_, y.den_));
    }
    friend Rational operator-(const Rational& x, const Rational& y) {
        return x + Rational(neg_checked(y.num_), y.den_);
    }
    friend Rational operator*(const Rational& x, const Rational& y) {
        return Rational(mul_checked(x.num_, y.num_), mul_checked(x.den_, y.den_));
    }
    friend Rational operator/(const Rational& x, const Rational& y) {
        if (y.num_ == 0) throw DomainError("rational division by zero");
        return Rational(mul_checked(x.num_, y.den_), mul_checked(x.den_, y.num_));
    }

    friend bool operator==(const Rational& x, const Rational& y) {
        return x.num_ == y.num_ && x.den_ == y.den_;
    }
    friend bool operator!=(const Rational& x, const Rational& y) { return !(x == y); }
    friend bool operator<(const Rational& x, const Rational& y) {
        // den_ > 0 after normalization, so cross-multiplication keeps order.
        return mul_checked(x.num_, y.den_) < mul_checked(y.num_, x.den_);
    }
    friend bool operator<=(const Rational& x, const Rational& y) { return !(y < x); }
    friend bool operator>(const Rational& x, const Rational& y) { return y < x; }
    friend bool operator>=(const Rational& x, const Rational& y) { return !(x < y); }

    /// Smallest integer >= value.
    std::int64_t ceil() const {
        std::int64_t q = num_ / den_;
        if (num_ % den_ != 0 && num_ > 0) ++q;
        return q;
    }

private:
    static std::int64_t add_checked(std::int64_t a, std::int64_t b) {
        std::int64_t r = 0;
        if (__builtin_add_overflow(a, b, &r))
            throw DomainError("rational overflow in addition");
        return r;
    }
    static std::int64_t mul_checked(std::int64_t a, std::int64_t b) {
        std::int64_t r = 0;
        if (__builtin_mul_overflow(a, b, &r))
            throw DomainError("rational overflow in multiplication");
        return r;
    }
    static std::int64_t neg_checked(std::int64_t a) {
        if (a == INT64_MIN) throw DomainError("rational overflow in negation");
        return -a;
    }

    void normalize() {
        if (den_ < 0) {
            num_ = neg_checked(num_);
            den_ = neg_checked(den_);
        }
        std::int64_t g = std::gcd(num_ < 0 ? -num_ : num_, den_);
        if (g > 1) {
            num_ /= g;
            den_ /= g;
        }
        if (num_ == 0) den_ = 1;
    }

    std::int64_t num_;
    std::int64_t den_;
};

} // namespace hardball

#endif
