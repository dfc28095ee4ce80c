"""Bit-level loops. Sequential by nature, so compiled with numba."""
import numpy as np
from numba import njit

ERR_CAPACITY = -1
ERR_UNSEEN_SYMBOL = -2
ERR_BAD_CODE = -3
ERR_TRUNCATED = -4


@njit(cache=True, nogil=True)
def pack_fixed(values, width, out):
    """Pack uint64 ``values`` at ``width`` bits each, LSB-first; ``out`` must be zeroed."""
    bitpos = 0
    for i in range(values.size):
        v = values[i]
        remaining = width
        while remaining > 0:
            byte = bitpos >> 3
            off = bitpos & 7
            take = 8 - off
            if take > remaining:
                take = remaining
            chunk = np.uint64(v & np.uint64((1 << take) - 1))
            out[byte] |= np.uint8(chunk << np.uint64(off))
            v = v >> np.uint64(take)
            bitpos += take
            remaining -= take
    return (bitpos + 7) >> 3


@njit(cache=True, nogil=True)
def unpack_fixed(payload, count, width, out):
    bitpos = 0
    for i in range(count):
        v = np.uint64(0)
        got = 0
        while got < width:
            byte = bitpos >> 3
            off = bitpos & 7
            take = 8 - off
            if take > width - got:
                take = width - got
            chunk = np.uint64((payload[byte] >> off) & ((1 << take) - 1))
            v |= chunk << np.uint64(got)
            got += take
            bitpos += take
        out[i] = v


@njit(cache=True, nogil=True)
def huff_encode(data, codes, lens, out):
    """MSB-first canonical codes. Returns bytes written or a negative error."""
    cap = out.size
    acc = np.uint64(0)
    nbits = 0
    pos = 0
    for i in range(data.size):
        s = data[i]
        L = lens[s]
        if L == 0:
            return ERR_UNSEEN_SYMBOL
        acc = (acc << np.uint64(L)) | np.uint64(codes[s])
        nbits += L
        while nbits >= 8:
            if pos >= cap:
                return ERR_CAPACITY
            nbits -= 8
            out[pos] = np.uint8((acc >> np.uint64(nbits)) & np.uint64(0xFF))
            pos += 1
        acc &= np.uint64((1 << nbits) - 1)
    if nbits > 0:
        if pos >= cap:
            return ERR_CAPACITY
        out[pos] = np.uint8((acc << np.uint64(8 - nbits)) & np.uint64(0xFF))
        pos += 1
    return pos


@njit(cache=True, nogil=True)
def huff_decode(payload, n_out, first, count, offset, symbols, maxlen, out):
    """Returns the number of payload bytes consumed, or a negative error."""
    nbytes = payload.size
    bitpos = 0
    total_bits = nbytes * 8
    for i in range(n_out):
        code = 0
        found = False
        for L in range(1, maxlen + 1):
            if bitpos >= total_bits:
                return ERR_TRUNCATED
            bit = (payload[bitpos >> 3] >> (7 - (bitpos & 7))) & 1
            bitpos += 1
            code = (code << 1) | bit
            idx = code - first[L]
            if idx >= 0 and idx < count[L]:
                out[i] = symbols[offset[L] + idx]
                found = True
                break
        if not found:
            return ERR_BAD_CODE
    return (bitpos + 7) >> 3
