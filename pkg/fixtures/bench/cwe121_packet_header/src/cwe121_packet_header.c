/* Packet header parser.
 * CWE-121: stack buffer overflow via an unbounded copy. */
#include <stdio.h>
#include <string.h>

void handle_packet(const char *payload) {
    char header[32];
    strcpy(header, payload);
    printf("header=%s\n", header);
}
