/*
 * tiny_vm.h: the host runtime API called by C emitted with `tirc compile --host emitc`.
 *
 * An emitted module defines one function
 *
 *     int <module>_run(tiny_vm_ctx* ctx);
 *
 * whose body is a straight sequence of calls into the eight functions below,
 * one call per host operation. Every function returns 0 on success and a
 * non-zero status otherwise; TINY_VM_TRY propagates the first failure.
 *
 * Values live in an int64_t register file owned by the emitted function.
 * Buffers are named by small integer slots owned by the runtime: slots
 * 0..num_args-1 hold the entry arguments, later slots are filled by
 * tiny_vm_alloc_transient and tiny_vm_bind_constant.
 */
#ifndef TINY_VM_H
#define TINY_VM_H

#include <stdint.h>
#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

/* Opaque per-invocation state: argument shapes, buffer slots, kernel table. */
typedef struct tiny_vm_ctx tiny_vm_ctx;

/* Buffer lifetimes accepted by tiny_vm_alloc_transient. */
#define TINY_VM_LIFETIME_TRANSIENT 0u /* served from the reusing pool */
#define TINY_VM_LIFETIME_RESULT 1u    /* handed back to the caller */

#define TINY_VM_TRY(expr)          \
  do {                             \
    int tiny_vm_status_ = (expr);  \
    if (tiny_vm_status_ != 0)      \
      return tiny_vm_status_;      \
  } while (0)

/* *dst = value */
int tiny_vm_const_i64(tiny_vm_ctx* ctx, int64_t* dst, int64_t value);

/* *dst = extent of axis `axis` of entry argument `arg` */
int tiny_vm_dim(tiny_vm_ctx* ctx, int64_t* dst, uint32_t arg, uint32_t axis);

/* *dst = lhs * rhs; fails on signed 64-bit overflow */
int tiny_vm_mul(tiny_vm_ctx* ctx, int64_t* dst, int64_t lhs, int64_t rhs);

/* *dst = ceil(lhs / rhs); fails when rhs <= 0 */
int tiny_vm_ceildiv(tiny_vm_ctx* ctx, int64_t* dst, int64_t lhs, int64_t rhs);

/* Zero-filled buffer of `size` bytes in slot `slot`. */
int tiny_vm_alloc_transient(tiny_vm_ctx* ctx, uint32_t slot, int64_t size, uint32_t lifetime);

/* Place constant-pool entry `index` (read-only) in slot `slot`. */
int tiny_vm_bind_constant(tiny_vm_ctx* ctx, uint32_t slot, uint32_t index);

/*
 * Run kernel `kernel` over a grid[0] x grid[1] x grid[2] workgroup grid.
 * bindings[i] is the buffer slot for kernel binding i; push holds the
 * push constants (runtime extents) in kernel order.
 */
int tiny_vm_dispatch(tiny_vm_ctx* ctx, uint32_t kernel, const int64_t grid[3],
                     uint32_t num_bindings, const uint32_t* bindings,
                     uint32_t num_push, const int64_t* push);

/*
 * Hand `count` result buffers to the caller. Result i is slot buffers[i]
 * with ranks[i] extents taken in order from `dims`. Ends the invocation.
 */
int tiny_vm_return(tiny_vm_ctx* ctx, uint32_t count, const uint32_t* buffers,
                   const uint32_t* ranks, const int64_t* dims);

#ifdef __cplusplus
}
#endif

#endif /* TINY_VM_H */
