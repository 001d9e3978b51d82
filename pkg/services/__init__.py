# Sylvester LCU solver services
