# Models package
# 数据模型：数据集、树、核函数、森林、实验记录与理论验证
