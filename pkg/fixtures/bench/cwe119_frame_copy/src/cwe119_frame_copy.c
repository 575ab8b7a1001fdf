/* Frame reassembly helper.
 * CWE-119: the copy length comes from the frame header, not the buffer. */
#include <string.h>

struct frame { unsigned short declared_len; char data[256]; };

void reassemble(struct frame *out, const char *wire, unsigned short wire_len) {
    out->declared_len = wire_len;
    memcpy(out->data, wire, wire_len);
    out->data[wire_len] = '\0';
}
