/* C interface of the overlay_sim shared library. Every call returns a
 * status code (0 on success); ovs_last_error copies the message of the
 * calling thread's most recent failure. */
#ifndef OVERLAY_SIM_H
#define OVERLAY_SIM_H

#include <stddef.h>
#include <stdint.h>

enum ovs_status {
    OVS_OK = 0,
    OVS_IO = 1,
    OVS_PARSE = 2,
    OVS_VALIDATION = 3,
    OVS_UNKNOWN_ENDPOINT = 4,
    OVS_BUSY = 5,
    OVS_BAD_ROUTE_REGISTER = 6,
    OVS_MMIO_OVERLAP = 10,
    OVS_MMIO_ALIGNMENT = 11,
    OVS_MMIO_RANGE = 12,
    OVS_MMIO_UNMAPPED = 13,
    OVS_MMIO_UNKNOWN_REGION = 14,
    OVS_TIMEOUT = 20,
    OVS_KERNEL = 21,
    OVS_SWITCH = 22,
    OVS_DMA_DIRECTION = 30,
    OVS_DMA_BUSY = 31,
    OVS_DMA_LENGTH = 32,
    OVS_DMA_EMPTY_BUFFER = 33,
    OVS_DMA_TIMING = 34,
    OVS_DMA_UNKNOWN_CHANNEL = 35,
    OVS_DMA_UNKNOWN_TICKET = 36,
    OVS_CLOSED_HANDLE = 40,
    OVS_INVALID_ARGUMENT = 41,
    OVS_BUFFER_TOO_SMALL = 42,
    OVS_IMAGE_TOO_SMALL = 43
};

int32_t ovs_load(const char *path, uint64_t *out_handle);
int32_t ovs_release(uint64_t handle);

int32_t ovs_mmio_read(uint64_t handle, uint32_t addr, uint32_t *out_value);
int32_t ovs_mmio_write(uint64_t handle, uint32_t addr, uint32_t value);
int32_t ovs_base_of(uint64_t handle, const char *name, uint32_t *out_base);
int32_t ovs_snapshot(uint64_t handle, uint32_t *addrs, uint32_t *values, size_t cap, size_t *out_len);

int32_t ovs_reconfigure_route(uint64_t handle, const char *producer, const char *consumer);
int32_t ovs_describe(uint64_t handle, char *buf, size_t cap, size_t *out_len);
int32_t ovs_start_kernel(uint64_t handle, const char *name, uint32_t width, uint32_t height);

int32_t ovs_dma_transfer(uint64_t handle, const char *channel, const uint8_t *data, size_t len,
                         uint64_t *out_ticket);
int32_t ovs_dma_wait(uint64_t handle, uint64_t ticket, uint64_t max_cycles, uint8_t *out, size_t cap,
                     size_t *out_bytes, double *out_seconds);

int32_t ovs_edge_detect_optimized(const uint8_t *pixels, uint32_t width, uint32_t height, uint32_t threshold,
                                  uint32_t threads, uint8_t *out);
int32_t ovs_digest(const uint8_t *data, size_t len, char *out_hex, size_t cap);

size_t ovs_last_error(char *buf, size_t cap);
const char *ovs_status_name(int32_t code);

#endif
