# Feature-field network and regression heads
