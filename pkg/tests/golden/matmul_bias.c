/* host program for module matmul_bias; arguments: 3 */
#include "tiny_vm.h"

int matmul_bias_run(tiny_vm_ctx* ctx) {
  int64_t r[6];
  TINY_VM_TRY(tiny_vm_const_i64(ctx, &r[0], INT64_C(2048)));
  TINY_VM_TRY(tiny_vm_alloc_transient(ctx, 3u, r[0], 1u));
  TINY_VM_TRY(tiny_vm_const_i64(ctx, &r[1], INT64_C(1)));
  TINY_VM_TRY(tiny_vm_const_i64(ctx, &r[2], INT64_C(16)));
  TINY_VM_TRY(tiny_vm_const_i64(ctx, &r[3], INT64_C(32)));
  TINY_VM_TRY(tiny_vm_const_i64(ctx, &r[4], INT64_C(64)));
  TINY_VM_TRY(tiny_vm_const_i64(ctx, &r[5], INT64_C(0)));
  TINY_VM_TRY(tiny_vm_dispatch(ctx, 0u, (const int64_t[]){r[1], r[1], r[1]}, 4u, (const uint32_t[]){0u, 1u, 2u, 3u}, 6u, (const int64_t[]){r[2], r[3], r[4], r[3], r[3], r[5]}));
  return tiny_vm_return(ctx, 1u, (const uint32_t[]){3u}, (const uint32_t[]){2u}, (const int64_t[]){r[2], r[3]});
}
