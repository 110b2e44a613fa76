"""Heavy-traffic exponential approximation of single-server queues."""
