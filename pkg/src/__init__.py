# STAQ: отбор эффектов в аддитивной квантильной регрессии
