/* host program for module conv1x1_net; arguments: 2 */
#include "tiny_vm.h"

int conv1x1_net_run(tiny_vm_ctx* ctx) {
  int64_t r[10];
  TINY_VM_TRY(tiny_vm_const_i64(ctx, &r[0], INT64_C(8192)));
  TINY_VM_TRY(tiny_vm_alloc_transient(ctx, 2u, r[0], 0u));
  TINY_VM_TRY(tiny_vm_const_i64(ctx, &r[1], INT64_C(1)));
  TINY_VM_TRY(tiny_vm_const_i64(ctx, &r[2], INT64_C(2)));
  TINY_VM_TRY(tiny_vm_const_i64(ctx, &r[3], INT64_C(64)));
  TINY_VM_TRY(tiny_vm_const_i64(ctx, &r[4], INT64_C(32)));
  TINY_VM_TRY(tiny_vm_const_i64(ctx, &r[5], INT64_C(16)));
  TINY_VM_TRY(tiny_vm_const_i64(ctx, &r[6], INT64_C(0)));
  TINY_VM_TRY(tiny_vm_dispatch(ctx, 0u, (const int64_t[]){r[1], r[2], r[1]}, 3u, (const uint32_t[]){0u, 1u, 2u}, 6u, (const int64_t[]){r[3], r[4], r[5], r[4], r[4], r[6]}));
  TINY_VM_TRY(tiny_vm_bind_constant(ctx, 3u, 0u));
  TINY_VM_TRY(tiny_vm_alloc_transient(ctx, 4u, r[0], 0u));
  TINY_VM_TRY(tiny_vm_const_i64(ctx, &r[7], INT64_C(8)));
  TINY_VM_TRY(tiny_vm_dispatch(ctx, 1u, (const int64_t[]){r[1], r[1], r[1]}, 3u, (const uint32_t[]){2u, 3u, 4u}, 8u, (const int64_t[]){r[1], r[7], r[7], r[4], r[4], r[4], r[6], r[6]}));
  TINY_VM_TRY(tiny_vm_bind_constant(ctx, 5u, 1u));
  TINY_VM_TRY(tiny_vm_const_i64(ctx, &r[8], INT64_C(1024)));
  TINY_VM_TRY(tiny_vm_alloc_transient(ctx, 6u, r[8], 1u));
  TINY_VM_TRY(tiny_vm_const_i64(ctx, &r[9], INT64_C(4)));
  TINY_VM_TRY(tiny_vm_dispatch(ctx, 2u, (const int64_t[]){r[1], r[2], r[1]}, 3u, (const uint32_t[]){4u, 5u, 6u}, 6u, (const int64_t[]){r[3], r[9], r[4], r[4], r[4], r[6]}));
  return tiny_vm_return(ctx, 1u, (const uint32_t[]){6u}, (const uint32_t[]){4u}, (const int64_t[]){r[1], r[7], r[7], r[9]});
}
