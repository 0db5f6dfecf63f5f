#include "wasmshade/validate.hpp"

#include <set>
#include <sstream>

#include "wasmshade/analysis.hpp"

namespace wasmshade {

namespace {

constexpr uint32_t kMaxMemoryPages = 65536;

class Checker {
 public:
  explicit Checker(const Module& m) : m_(m) {}

  ValidationResult run() {
    types();
    imports();
    functions();
    tables_memories();
    globals();
    exports();
    start();
    elems();
    datas();
    return std::move(result_);
  }

 private:
  void add(std::string where, std::string message) {
    result_.violations.push_back({std::move(where), std::move(message)});
  }

  void check_limits(const std::string& where, const Limits& l, uint32_t cap) {
    if (l.max && *l.max < l.min) add(where, "limits max below min");
    if (l.min > cap) add(where, "limits min above the allowed maximum");
    if (l.max && *l.max > cap) add(where, "limits max above the allowed maximum");
  }

  void types() {
    for (size_t i = 0; i < m_.types.size(); ++i)
      if (m_.types[i].results.size() > 1)
        add("type " + std::to_string(i), "more than one result");
  }

  void imports() {
    for (size_t i = 0; i < m_.imports.size(); ++i) {
      const Import& im = m_.imports[i];
      std::string where = "import " + std::to_string(i) + " '" + im.module +
                          "." + im.field + "'";
      switch (im.kind) {
        case ExternalKind::Func:
          if (im.type_index >= m_.types.size())
            add(where, "type index out of range");
          break;
        case ExternalKind::Table:
          check_limits(where, im.limits, UINT32_MAX);
          break;
        case ExternalKind::Memory:
          check_limits(where, im.limits, kMaxMemoryPages);
          break;
        case ExternalKind::Global:
          break;
      }
    }
  }

  void functions() {
    for (size_t i = 0; i < m_.functions.size(); ++i) {
      const Function& f = m_.functions[i];
      std::string where = "func " + std::to_string(m_.num_imported_funcs() + i);
      if (f.type_index >= m_.types.size()) {
        add(where, "type index out of range");
        continue;
      }
      TypingResult tr = type_function_body(m_, f);
      if (tr.error) add(where, *tr.error);
    }
  }

  void tables_memories() {
    uint32_t ntables = 0, nmems = 0;
    for (const auto& im : m_.imports) {
      if (im.kind == ExternalKind::Table) ++ntables;
      if (im.kind == ExternalKind::Memory) ++nmems;
    }
    for (size_t i = 0; i < m_.tables.size(); ++i)
      check_limits("table " + std::to_string(ntables + i), m_.tables[i].limits,
                   UINT32_MAX);
    for (size_t i = 0; i < m_.memories.size(); ++i)
      check_limits("memory " + std::to_string(nmems + i), m_.memories[i].limits,
                   kMaxMemoryPages);
    ntables += m_.tables.size();
    nmems += m_.memories.size();
    if (ntables > 1) add("module", "more than one table");
    if (nmems > 1) add("module", "more than one memory");
  }

  // Type of a constant expression, or nullopt after reporting. `globals_seen`
  // limits which globals a global.get initializer may reference: imported,
  // immutable ones only.
  std::optional<ValType> const_expr_type(const std::string& where,
                                         const Instruction& ins) {
    switch (ins.op) {
      case Opcode::I32Const: return ValType::I32;
      case Opcode::I64Const: return ValType::I64;
      case Opcode::F32Const: return ValType::F32;
      case Opcode::F64Const: return ValType::F64;
      case Opcode::GlobalGet: {
        uint32_t idx = ins.index();
        uint32_t i = 0;
        for (const auto& im : m_.imports) {
          if (im.kind != ExternalKind::Global) continue;
          if (i == idx) {
            if (im.global_mutable) {
              add(where, "initializer reads a mutable global");
              return std::nullopt;
            }
            return im.global_type;
          }
          ++i;
        }
        add(where, "initializer may only read imported globals");
        return std::nullopt;
      }
      default:
        add(where, "initializer is not a constant expression");
        return std::nullopt;
    }
  }

  void globals() {
    for (size_t i = 0; i < m_.globals.size(); ++i) {
      const Global& g = m_.globals[i];
      std::string where =
          "global " + std::to_string(m_.num_imported_globals() + i);
      auto t = const_expr_type(where, g.init);
      if (t && *t != g.type) add(where, "initializer type mismatch");
    }
  }

  void exports() {
    std::set<std::string> names;
    for (size_t i = 0; i < m_.exports.size(); ++i) {
      const Export& ex = m_.exports[i];
      std::string where = "export '" + ex.name + "'";
      if (!names.insert(ex.name).second) add(where, "duplicate export name");
      uint32_t count = 0;
      switch (ex.kind) {
        case ExternalKind::Func: count = m_.num_funcs(); break;
        case ExternalKind::Global: count = m_.num_globals(); break;
        case ExternalKind::Table: {
          for (const auto& im : m_.imports)
            if (im.kind == ExternalKind::Table) ++count;
          count += m_.tables.size();
          break;
        }
        case ExternalKind::Memory: {
          for (const auto& im : m_.imports)
            if (im.kind == ExternalKind::Memory) ++count;
          count += m_.memories.size();
          break;
        }
      }
      if (ex.index >= count) add(where, "index out of range");
    }
  }

  void start() {
    if (!m_.start) return;
    if (*m_.start >= m_.num_funcs()) {
      add("start", "function index out of range");
      return;
    }
    const FuncType& ft = m_.func_type(*m_.start);
    if (!ft.params.empty() || !ft.results.empty())
      add("start", "start function must have no parameters or results");
  }

  void elems() {
    for (size_t i = 0; i < m_.elems.size(); ++i) {
      const ElemSegment& seg = m_.elems[i];
      std::string where = "elem " + std::to_string(i);
      if (!m_.has_table()) {
        add(where, "element segment without a table");
        continue;
      }
      if (seg.table_index != 0) add(where, "table index must be 0");
      auto t = const_expr_type(where, seg.offset);
      if (t && *t != ValType::I32) add(where, "offset must be i32");
      for (uint32_t fi : seg.func_indices)
        if (fi >= m_.num_funcs()) {
          add(where, "function index out of range");
          break;
        }
    }
  }

  void datas() {
    for (size_t i = 0; i < m_.datas.size(); ++i) {
      const DataSegment& seg = m_.datas[i];
      std::string where = "data " + std::to_string(i);
      if (!m_.has_memory()) {
        add(where, "data segment without a memory");
        continue;
      }
      if (seg.memory_index != 0) add(where, "memory index must be 0");
      auto t = const_expr_type(where, seg.offset);
      if (t && *t != ValType::I32) add(where, "offset must be i32");
    }
  }

  const Module& m_;
  ValidationResult result_;
};

}  // namespace

std::string ValidationResult::summary() const {
  if (violations.empty()) return "ok";
  std::ostringstream os;
  os << violations.size() << " violation(s)";
  for (const auto& v : violations) os << "; " << v.where << ": " << v.message;
  return os.str();
}

ValidationResult validate(const Module& m) { return Checker(m).run(); }

void require_valid(const Module& m, const char* who) {
  ValidationResult r = validate(m);
  if (!r.ok())
    throw Error(ErrorCode::InvalidModule,
                std::string(who) + ": module is invalid: " + r.summary());
}

}  // namespace wasmshade
