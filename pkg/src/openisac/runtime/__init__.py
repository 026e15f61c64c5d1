"""Streaming runtime: bounded queues, binary record formats, UDP payload
framing, the TCP control protocol, and the BS/UE/loopback pipelines."""
