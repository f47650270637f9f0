#pragma once
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "advaug/errors.hpp"
#include "advaug/nn.hpp"

namespace advaug {

// named-entry binary container; entries keep insertion order so a
// save/load/save cycle is byte-identical
class Checkpoint {
 public:
  enum Kind : uint8_t { kStr = 0, kF32 = 1, kF64 = 2, kI64 = 3, kU32 = 4 };

  void put_str(const std::string& name, std::string v);
  void put_f32(const std::string& name, std::vector<float> v);
  void put_f64(const std::string& name, std::vector<double> v);
  void put_i64(const std::string& name, std::vector<int64_t> v);
  void put_u32(const std::string& name, std::vector<uint32_t> v);
  void put_int(const std::string& name, int64_t v) { put_i64(name, {v}); }
  void put_num(const std::string& name, double v) { put_f64(name, {v}); }

  const std::string& str(const std::string& name) const;
  const std::vector<float>& f32(const std::string& name) const;
  const std::vector<double>& f64(const std::string& name) const;
  const std::vector<int64_t>& i64(const std::string& name) const;
  const std::vector<uint32_t>& u32(const std::string& name) const;
  int64_t get_int(const std::string& name) const;
  double get_num(const std::string& name) const;

  bool has(const std::string& name) const { return index_.count(name) != 0; }
  std::vector<std::string> names() const;

  void save(const std::string& path) const;  // writes a temp file, then renames
  static Checkpoint load(const std::string& path);

 private:
  struct Entry {
    std::string name;
    Kind kind;
    std::string s;
    std::vector<float> f32;
    std::vector<double> f64;
    std::vector<int64_t> i64;
    std::vector<uint32_t> u32;
  };
  const Entry& at(const std::string& name, Kind kind) const;
  Entry& fresh(const std::string& name, Kind kind);
  std::vector<Entry> entries_;
  std::map<std::string, size_t> index_;
};

// float tensors under "<pfx>.<param name>"; loading checks exact sizes
template <class T>
void put_params(Checkpoint& ck, const std::string& pfx,
                const std::vector<ParamRef<T>>& ps);
template <class T>
void get_params(const Checkpoint& ck, const std::string& pfx,
                std::vector<ParamRef<T>>& ps);
template <class T>
void put_buffers(Checkpoint& ck, const std::string& pfx,
                 const std::vector<BufRef<T>>& bs);
template <class T>
void get_buffers(const Checkpoint& ck, const std::string& pfx,
                 std::vector<BufRef<T>>& bs);

// Adam state aligned to the parameter list; a never-stepped optimizer stores
// only t=0 and restores to the lazy-init state
template <class T>
void put_adam(Checkpoint& ck, const std::string& pfx, const Adam<T>& opt,
              const std::vector<ParamRef<T>>& ps);
template <class T>
void get_adam(const Checkpoint& ck, const std::string& pfx, Adam<T>& opt,
              const std::vector<ParamRef<T>>& ps);

}  // namespace advaug
