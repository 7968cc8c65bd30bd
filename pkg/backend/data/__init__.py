# Data package
# 默认实验配置 (bench_config.json)
