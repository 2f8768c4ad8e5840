/* host program for module int_reduce; arguments: 2 */
#include "tiny_vm.h"

int int_reduce_run(tiny_vm_ctx* ctx) {
  int64_t r[7];
  TINY_VM_TRY(tiny_vm_const_i64(ctx, &r[0], INT64_C(1536)));
  TINY_VM_TRY(tiny_vm_alloc_transient(ctx, 2u, r[0], 0u));
  TINY_VM_TRY(tiny_vm_const_i64(ctx, &r[1], INT64_C(1)));
  TINY_VM_TRY(tiny_vm_const_i64(ctx, &r[2], INT64_C(16)));
  TINY_VM_TRY(tiny_vm_const_i64(ctx, &r[3], INT64_C(24)));
  TINY_VM_TRY(tiny_vm_const_i64(ctx, &r[4], INT64_C(32)));
  TINY_VM_TRY(tiny_vm_dispatch(ctx, 0u, (const int64_t[]){r[1], r[1], r[1]}, 3u, (const uint32_t[]){0u, 1u, 2u}, 4u, (const int64_t[]){r[2], r[3], r[4], r[4]}));
  TINY_VM_TRY(tiny_vm_const_i64(ctx, &r[5], INT64_C(96)));
  TINY_VM_TRY(tiny_vm_alloc_transient(ctx, 3u, r[5], 1u));
  TINY_VM_TRY(tiny_vm_const_i64(ctx, &r[6], INT64_C(0)));
  TINY_VM_TRY(tiny_vm_dispatch(ctx, 1u, (const int64_t[]){r[1], r[1], r[1]}, 2u, (const uint32_t[]){2u, 3u}, 4u, (const int64_t[]){r[3], r[2], r[4], r[6]}));
  return tiny_vm_return(ctx, 1u, (const uint32_t[]){3u}, (const uint32_t[]){1u}, (const int64_t[]){r[3]});
}
